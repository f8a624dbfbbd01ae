// Wire protocol shared with the session service: one JSON object per message.

export type ClientMessage =
  | { type: 'hello'; name: string }
  | { type: 'reset'; phase: 'detection' | 'descent'; suite?: string; seed?: number; practice?: boolean }
  | { type: 'action'; name: string }
  | { type: 'telemetry'; since?: number }
  | { type: 'bye' }

export interface StateMessage {
  type: 'state'
  phase: string | null
  step: number
  budget: number | null
  terminal: boolean
  pose?: number[]
}

export interface FrameMessage {
  type: 'frame'
  seq: number
  width: number
  height: number
  pixels: string // base64, 8-bit grayscale, row major
}

export interface StepResultMessage {
  type: 'step_result'
  reward: number
  terminal: boolean
  reason: string
}

export interface EpisodeSummaryMessage {
  type: 'episode_summary'
  outcome: string
  steps: number
  return: number
}

export interface ErrorMessage {
  type: 'error'
  code: string
  message: string
}

export interface MetricsMessage {
  type: 'metrics'
  frame: number
  return: number | null
  loss: number | null
  qmax: number | null
  epsilon: number | null
}

export type ServerMessage =
  | StateMessage
  | FrameMessage
  | StepResultMessage
  | EpisodeSummaryMessage
  | ErrorMessage
  | MetricsMessage

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown
  try {
    data = JSON.parse(raw)
  } catch {
    return null
  }
  if (typeof data !== 'object' || data === null) return null
  const msg = data as { type?: unknown }
  if (typeof msg.type !== 'string') return null
  switch (msg.type) {
    case 'state':
    case 'frame':
    case 'step_result':
    case 'episode_summary':
    case 'error':
    case 'metrics':
      return data as ServerMessage
    default:
      return null
  }
}

export function encode(msg: ClientMessage): string {
  return JSON.stringify(msg)
}

// Keyboard layout: arrows shift on the plane, space is the phase-specific
// commitment action (trigger while detecting, descend while descending).
export function actionForKey(code: string, phase: string | null): string | null {
  switch (code) {
    case 'ArrowUp':
      return 'forward'
    case 'ArrowDown':
      return 'backward'
    case 'ArrowLeft':
      return 'left'
    case 'ArrowRight':
      return 'right'
    case 'Space':
      if (phase === 'detection') return 'trigger'
      if (phase === 'descent') return 'descend'
      return null
    default:
      return null
  }
}
