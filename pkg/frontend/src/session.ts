// Session state machine: all truth comes from server messages; the client
// only tracks what it was told and gates keyboard input accordingly.

import {
  ClientMessage,
  EpisodeSummaryMessage,
  ServerMessage,
  actionForKey,
  encode,
} from './protocol.js'

export interface FrameSink {
  (gray: Uint8ClampedArray, width: number, height: number, seq: number): void
}

export interface SessionSnapshot {
  connection: 'idle' | 'open' | 'closed'
  phase: string | null
  step: number
  budget: number | null
  lastReward: number | null
  outcome: string | null
  episodeReturn: number | null
  terminal: boolean
  inFlight: boolean
  lastError: string | null
}

export function decodePixels(b64: string, width: number, height: number):
    Uint8ClampedArray | null {
  let raw: string
  try {
    raw = atob(b64)
  } catch {
    return null
  }
  if (raw.length !== width * height) return null
  const out = new Uint8ClampedArray(raw.length)
  for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i)
  return out
}

export class SessionView {
  private sendRaw: (raw: string) => void
  private state: SessionSnapshot = {
    connection: 'idle',
    phase: null,
    step: 0,
    budget: null,
    lastReward: null,
    outcome: null,
    episodeReturn: null,
    terminal: true,
    inFlight: false,
    lastError: null,
  }
  private lastSeq = 0
  private frameSink: FrameSink | null = null
  private listeners: Array<(s: SessionSnapshot) => void> = []

  constructor(send: (raw: string) => void) {
    this.sendRaw = send
  }

  onFrame(sink: FrameSink): void {
    this.frameSink = sink
  }

  onChange(listener: (s: SessionSnapshot) => void): void {
    this.listeners.push(listener)
  }

  snapshot(): SessionSnapshot {
    return { ...this.state }
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.snapshot())
  }

  private send(msg: ClientMessage): void {
    this.sendRaw(encode(msg))
  }

  connected(): void {
    this.state.connection = 'open'
    this.send({ type: 'hello', name: 'pilot-ui' })
    this.emit()
  }

  disconnected(): void {
    this.state.connection = 'closed'
    this.state.inFlight = false
    this.emit()
  }

  reset(phase: 'detection' | 'descent', suite?: string, seed?: number,
        practice?: boolean): void {
    this.state.outcome = null
    this.state.episodeReturn = null
    this.state.lastReward = null
    this.state.lastError = null
    this.state.inFlight = true // until the first state+frame arrive
    this.send({ type: 'reset', phase, suite, seed, practice })
    this.emit()
  }

  requestTelemetry(since?: number): void {
    this.send({ type: 'telemetry', since })
  }

  /** Keyboard entry point; returns true when an action message went out. */
  keydown(code: string): boolean {
    if (this.state.terminal || this.state.inFlight) return false
    const action = actionForKey(code, this.state.phase)
    if (action === null) return false
    this.state.inFlight = true
    this.send({ type: 'action', name: action })
    this.emit()
    return true
  }

  handleRaw(raw: string): void {
    const msg = JSON.parse(raw) as ServerMessage
    this.handle(msg)
  }

  handle(msg: ServerMessage): void {
    switch (msg.type) {
      case 'state':
        this.state.phase = msg.phase
        this.state.step = msg.step
        this.state.budget = msg.budget
        this.state.terminal = msg.terminal
        this.state.inFlight = false
        break
      case 'frame': {
        if (msg.seq <= this.lastSeq) {
          console.warn(`dropped out-of-order frame seq ${msg.seq}`)
          return
        }
        this.lastSeq = msg.seq
        const pixels = decodePixels(msg.pixels, msg.width, msg.height)
        if (pixels === null) {
          console.warn('dropped malformed frame payload')
          return
        }
        if (this.frameSink) this.frameSink(pixels, msg.width, msg.height, msg.seq)
        return // frames do not change control state
      }
      case 'step_result':
        this.state.lastReward = msg.reward
        if (msg.terminal) {
          this.state.terminal = true
          this.state.outcome = msg.reason
        }
        break
      case 'episode_summary':
        this.state.outcome = msg.outcome
        this.state.episodeReturn = msg.return
        this.state.terminal = true
        this.state.inFlight = false
        break
      case 'error':
        this.state.lastError = `${msg.code}: ${msg.message}`
        this.state.inFlight = false
        break
      case 'metrics':
        return // handled by the telemetry dashboard
    }
    this.emit()
  }

  get lastFrameSeq(): number {
    return this.lastSeq
  }
}
