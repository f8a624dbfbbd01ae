import { describe, expect, it } from 'vitest'
import { actionForKey, parseServerMessage } from '../src/protocol.js'
import { SessionView, decodePixels } from '../src/session.js'

function b64(bytes: number[]): string {
  return btoa(String.fromCharCode(...bytes))
}

function openSession() {
  const sent: string[] = []
  const session = new SessionView(raw => sent.push(raw))
  session.handle({ type: 'state', phase: 'detection', step: 0, budget: 20, terminal: false })
  return { session, sent }
}

describe('protocol', () => {
  it('maps arrows and the phase-specific space action', () => {
    expect(actionForKey('ArrowUp', 'detection')).toBe('forward')
    expect(actionForKey('ArrowDown', 'detection')).toBe('backward')
    expect(actionForKey('ArrowLeft', 'detection')).toBe('left')
    expect(actionForKey('ArrowRight', 'detection')).toBe('right')
    expect(actionForKey('Space', 'detection')).toBe('trigger')
    expect(actionForKey('Space', 'descent')).toBe('descend')
    expect(actionForKey('Space', null)).toBeNull()
    expect(actionForKey('KeyQ', 'detection')).toBeNull()
  })

  it('rejects malformed server payloads', () => {
    expect(parseServerMessage('not json')).toBeNull()
    expect(parseServerMessage('42')).toBeNull()
    expect(parseServerMessage('{"type":"quack"}')).toBeNull()
    expect(parseServerMessage('{"type":"state","phase":null,"step":0,"budget":null,"terminal":true}'))
      .toMatchObject({ type: 'state' })
  })
})

describe('decodePixels', () => {
  it('decodes payloads of the right length', () => {
    const pixels = decodePixels(b64([0, 128, 255, 64]), 2, 2)
    expect(pixels).not.toBeNull()
    expect(Array.from(pixels!)).toEqual([0, 128, 255, 64])
  })

  it('rejects wrong-length and invalid payloads', () => {
    expect(decodePixels(b64([1, 2, 3]), 2, 2)).toBeNull()
    expect(decodePixels('!!!not-base64!!!', 2, 2)).toBeNull()
  })
})

describe('SessionView', () => {
  it('sends exactly one action per keypress and blocks while in flight', () => {
    const { session, sent } = openSession()
    expect(session.keydown('ArrowLeft')).toBe(true)
    expect(sent).toHaveLength(1)
    expect(JSON.parse(sent[0])).toEqual({ type: 'action', name: 'left' })
    // a second press while the step is in flight is ignored
    expect(session.keydown('ArrowLeft')).toBe(false)
    expect(sent).toHaveLength(1)
    // the step_result + state unlock input
    session.handle({ type: 'step_result', reward: -0.01, terminal: false, reason: 'none' })
    session.handle({ type: 'state', phase: 'detection', step: 1, budget: 19, terminal: false })
    expect(session.keydown('ArrowRight')).toBe(true)
    expect(sent).toHaveLength(2)
  })

  it('ignores keys that do not map to actions', () => {
    const { session, sent } = openSession()
    expect(session.keydown('KeyZ')).toBe(false)
    expect(sent).toHaveLength(0)
  })

  it('locks controls after a terminal step until reset', () => {
    const { session, sent } = openSession()
    session.keydown('Space')
    session.handle({ type: 'step_result', reward: -1.0, terminal: true, reason: 'failure' })
    session.handle({ type: 'episode_summary', outcome: 'failure', steps: 1, return: -1.0 })
    expect(session.snapshot().terminal).toBe(true)
    expect(session.snapshot().outcome).toBe('failure')
    expect(session.keydown('ArrowLeft')).toBe(false)
    expect(sent).toHaveLength(1) // only the trigger went out
    session.reset('detection', undefined, 7)
    expect(JSON.parse(sent[1])).toMatchObject({ type: 'reset', phase: 'detection', seed: 7 })
    expect(session.snapshot().outcome).toBeNull()
  })

  it('delivers frames in order and drops stale sequence numbers', () => {
    const { session } = openSession()
    const seen: number[] = []
    session.onFrame((_gray, _w, _h, seq) => seen.push(seq))
    const frame = (seq: number) => ({
      type: 'frame' as const, seq, width: 2, height: 2, pixels: b64([1, 2, 3, 4]),
    })
    session.handle(frame(1))
    session.handle(frame(2))
    session.handle(frame(2)) // duplicate: dropped
    session.handle(frame(1)) // stale: dropped
    session.handle(frame(5))
    expect(seen).toEqual([1, 2, 5])
    expect(session.lastFrameSeq).toBe(5)
  })

  it('keeps the last frame when a payload is malformed', () => {
    const { session } = openSession()
    const seen: number[] = []
    session.onFrame((_g, _w, _h, seq) => seen.push(seq))
    session.handle({ type: 'frame', seq: 1, width: 2, height: 2, pixels: b64([9, 9, 9, 9]) })
    session.handle({ type: 'frame', seq: 2, width: 2, height: 2, pixels: 'bogus!' })
    expect(seen).toEqual([1])
  })

  it('surfaces errors without ending the session', () => {
    const { session } = openSession()
    session.handle({ type: 'error', code: 'illegal_action', message: 'nope' })
    const snap = session.snapshot()
    expect(snap.lastError).toContain('illegal_action')
    expect(snap.terminal).toBe(false)
  })
})

describe('keyboard events through the DOM', () => {
  it('a dispatched keydown produces one action message', () => {
    const sent: string[] = []
    const session = new SessionView(raw => sent.push(raw))
    session.handle({ type: 'state', phase: 'detection', step: 0, budget: 20, terminal: false })
    const handler = (event: KeyboardEvent) => {
      if (!event.repeat) session.keydown(event.code)
    }
    window.addEventListener('keydown', handler)
    window.dispatchEvent(new KeyboardEvent('keydown', { code: 'ArrowUp' }))
    expect(sent).toHaveLength(1)
    expect(JSON.parse(sent[0])).toEqual({ type: 'action', name: 'forward' })
    window.removeEventListener('keydown', handler)
  })
})
