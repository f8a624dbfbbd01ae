// Browser entry point: connects to the session service over WebSocket, shows
// the camera feed and HUD, maps the keyboard, and polls telemetry charts.

import { TelemetryChart, SeriesPoint } from './chart.js'
import { CanvasPainter } from './frameview.js'
import { MetricsMessage, parseServerMessage } from './protocol.js'
import { SessionView } from './session.js'

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id)
  if (!node) throw new Error(`missing element #${id}`)
  return node as T
}

function wsUrl(): string {
  const params = new URLSearchParams(window.location.search)
  const port = params.get('ws') ?? '7861'
  return `ws://${window.location.hostname || '127.0.0.1'}:${port}`
}

function main(): void {
  const feed = el<HTMLCanvasElement>('feed')
  const banner = el<HTMLDivElement>('banner')
  const hud = el<HTMLDivElement>('hud')
  const errors = el<HTMLDivElement>('errors')
  const returnChartCanvas = el<HTMLCanvasElement>('chart-return')
  const qmaxChartCanvas = el<HTMLCanvasElement>('chart-qmax')

  const painter = new CanvasPainter(feed)
  let socket: WebSocket | null = null
  const session = new SessionView(raw => socket?.send(raw))
  session.onFrame((gray, w, h) => painter.paint(gray, w, h))

  session.onChange(s => {
    const budget = s.budget === null ? '-' : String(s.budget)
    hud.textContent =
      `phase ${s.phase ?? '-'} | step ${s.step} | remaining ${budget} | ` +
      `reward ${s.lastReward ?? '-'} | ${s.connection}`
    if (s.outcome !== null) {
      const sign = (s.lastReward ?? 0) > 0 ? 'positive' : 'negative'
      banner.textContent = `episode over: ${s.outcome} (${sign} reward)` +
        (s.episodeReturn !== null ? `, return ${s.episodeReturn.toFixed(2)}` : '')
      banner.className = s.outcome === 'success' ? 'banner good' : 'banner bad'
    } else if (s.connection === 'closed') {
      banner.textContent = 'disconnected; press R to reconnect'
      banner.className = 'banner bad'
    } else {
      banner.textContent = s.terminal ? 'press N to start an episode' : ''
      banner.className = 'banner'
    }
    errors.textContent = s.lastError ?? ''
  })

  const returnChart = new TelemetryChart(
    returnChartCanvas.getContext('2d') as unknown as import('./chart.js').LineContext,
    returnChartCanvas.width, returnChartCanvas.height)
  const qmaxChart = new TelemetryChart(
    qmaxChartCanvas.getContext('2d') as unknown as import('./chart.js').LineContext,
    qmaxChartCanvas.width, qmaxChartCanvas.height)
  const returns: SeriesPoint[] = []
  const qmaxes: SeriesPoint[] = []
  let telemetryCursor = -1

  function connect(): void {
    socket = new WebSocket(wsUrl())
    socket.onopen = () => session.connected()
    socket.onclose = () => session.disconnected()
    socket.onmessage = event => {
      const msg = parseServerMessage(String(event.data))
      if (msg === null) {
        console.warn('dropped unparseable message')
        return
      }
      if (msg.type === 'metrics') {
        ingestMetrics(msg)
        return
      }
      session.handle(msg)
    }
  }

  function ingestMetrics(msg: MetricsMessage): void {
    telemetryCursor = Math.max(telemetryCursor, msg.frame)
    if (msg.return !== null) returns.push({ frame: msg.frame, value: msg.return })
    if (msg.qmax !== null) qmaxes.push({ frame: msg.frame, value: msg.qmax })
    returnChart.draw(returns)
    qmaxChart.draw(qmaxes, 1.0) // the +1 return ceiling makes overshoot visible
  }

  window.setInterval(() => {
    if (socket && socket.readyState === WebSocket.OPEN) {
      session.requestTelemetry(telemetryCursor)
    }
  }, 2000)

  window.addEventListener('keydown', event => {
    if (event.repeat) return // one action per physical keypress
    if (event.code === 'KeyN') {
      session.reset('detection')
      return
    }
    if (event.code === 'KeyD') {
      session.reset('descent')
      return
    }
    if (event.code === 'KeyR' && session.snapshot().connection === 'closed') {
      connect()
      return
    }
    if (session.keydown(event.code)) event.preventDefault()
  })

  connect()
}

main()
