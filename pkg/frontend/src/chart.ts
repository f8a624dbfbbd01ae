// Telemetry line charts with an optional reference ceiling.  Layout is a pure
// function so tests can assert point placement without a real 2D context.

export interface SeriesPoint {
  frame: number
  value: number
}

export interface ChartLayout {
  points: Array<[number, number]> // canvas coordinates, input order preserved
  ceilingY: number | null
  xOf(frame: number): number
  yOf(value: number): number
}

export interface ChartOptions {
  width: number
  height: number
  ceiling?: number | null
  pad?: number
}

export function chartLayout(series: SeriesPoint[], opts: ChartOptions): ChartLayout {
  const pad = opts.pad ?? 8
  const w = opts.width - 2 * pad
  const h = opts.height - 2 * pad
  const frames = series.map(p => p.frame)
  const values = series.map(p => p.value)
  if (opts.ceiling !== undefined && opts.ceiling !== null) values.push(opts.ceiling)
  const fMin = frames.length ? Math.min(...frames) : 0
  const fMax = frames.length ? Math.max(...frames) : 1
  const vMin = values.length ? Math.min(...values) : 0
  const vMax = values.length ? Math.max(...values) : 1
  const fSpan = fMax - fMin || 1
  const vSpan = vMax - vMin || 1
  const xOf = (frame: number) => pad + ((frame - fMin) / fSpan) * w
  const yOf = (value: number) => pad + (1 - (value - vMin) / vSpan) * h
  return {
    points: series.map(p => [xOf(p.frame), yOf(p.value)]),
    ceilingY: opts.ceiling === undefined || opts.ceiling === null ? null : yOf(opts.ceiling),
    xOf,
    yOf,
  }
}

// The subset of CanvasRenderingContext2D the painter needs; tests stub it.
export interface LineContext {
  beginPath(): void
  moveTo(x: number, y: number): void
  lineTo(x: number, y: number): void
  stroke(): void
  setLineDash(segments: number[]): void
  clearRect(x: number, y: number, w: number, h: number): void
  strokeStyle: string | CanvasGradient | CanvasPattern
}

export class TelemetryChart {
  private ctx: LineContext
  private width: number
  private height: number

  constructor(ctx: LineContext, width: number, height: number) {
    this.ctx = ctx
    this.width = width
    this.height = height
  }

  draw(series: SeriesPoint[], ceiling: number | null = null): ChartLayout {
    const layout = chartLayout(series, { width: this.width, height: this.height, ceiling })
    const ctx = this.ctx
    ctx.clearRect(0, 0, this.width, this.height)
    if (layout.ceilingY !== null) {
      ctx.strokeStyle = '#c0392b'
      ctx.setLineDash([4, 3])
      ctx.beginPath()
      ctx.moveTo(0, layout.ceilingY)
      ctx.lineTo(this.width, layout.ceilingY)
      ctx.stroke()
      ctx.setLineDash([])
    }
    if (layout.points.length > 0) {
      ctx.strokeStyle = '#2c3e50'
      ctx.beginPath()
      ctx.moveTo(layout.points[0][0], layout.points[0][1])
      for (let i = 1; i < layout.points.length; i++) {
        ctx.lineTo(layout.points[i][0], layout.points[i][1])
      }
      ctx.stroke()
    }
    return layout
  }
}
