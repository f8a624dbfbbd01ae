// Draws the agent's grayscale observation, scaled with nearest neighbor so
// the operator sees exactly what the network sees, block pixels included.

export interface GrayPainter {
  paint(gray: Uint8ClampedArray, width: number, height: number): void
}

export class CanvasPainter implements GrayPainter {
  private canvas: HTMLCanvasElement
  private staging: HTMLCanvasElement

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas
    this.staging = document.createElement('canvas')
  }

  paint(gray: Uint8ClampedArray, width: number, height: number): void {
    const rgba = new Uint8ClampedArray(width * height * 4)
    for (let i = 0; i < gray.length; i++) {
      rgba[i * 4] = gray[i]
      rgba[i * 4 + 1] = gray[i]
      rgba[i * 4 + 2] = gray[i]
      rgba[i * 4 + 3] = 255
    }
    this.staging.width = width
    this.staging.height = height
    const sctx = this.staging.getContext('2d')
    const ctx = this.canvas.getContext('2d')
    if (!sctx || !ctx) return
    sctx.putImageData(new ImageData(rgba, width, height), 0, 0)
    // keep the square aspect whatever the canvas size
    const side = Math.min(this.canvas.width, this.canvas.height)
    ctx.imageSmoothingEnabled = false
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height)
    ctx.drawImage(this.staging, 0, 0, width, height,
                  (this.canvas.width - side) / 2, (this.canvas.height - side) / 2,
                  side, side)
  }
}
