// Console state and its pure update functions. Rendering derives entirely
// from UiState, so snapshot tests can drive these without a browser.

import { Ack, DetectionFrame, clampAngle } from "./wire.js";

export const FRAME_HISTORY = 8;
export const HUD_WINDOW = 30;
export const SEND_QUEUE_LIMIT = 50;
export const MIN_SEND_GAP_MS = 100; // per joint: at most 10 commands/s

export interface PendingCommand {
  joint: string;
  targetDeg: number;
  seq: number;
}

export interface UiState {
  connected: boolean;
  room: string | null;
  participant: string | null;
  sliders: number[]; // commanded targets, degrees
  gripClosed: boolean;
  ackedAngles: number[];
  lastAckedTargets: number[]; // snap-back values on rejection
  pendingByJoint: Map<number, number>; // joint index -> unacked seq
  frames: DetectionFrame[];
  displayLatenciesMs: number[];
  droppedFrames: number;
  highlightedDetection: number | null;
  sendQueue: PendingCommand[];
  droppedCommands: number;
  banner: string | null;
  nextSeq: number;
}

export function initialState(): UiState {
  return {
    connected: false,
    room: null,
    participant: null,
    sliders: [0, 0, 0, 0, 0, 0],
    gripClosed: false,
    ackedAngles: [0, 0, 0, 0, 0, 0],
    lastAckedTargets: [0, 0, 0, 0, 0, 0],
    pendingByJoint: new Map(),
    frames: [],
    displayLatenciesMs: [],
    droppedFrames: 0,
    highlightedDetection: null,
    sendQueue: [],
    droppedCommands: 0,
    banner: null,
    nextSeq: 1,
  };
}

export function hudMeanMs(state: UiState): number | null {
  const window = state.displayLatenciesMs.slice(-HUD_WINDOW);
  if (window.length === 0) return null;
  return window.reduce((a, b) => a + b, 0) / window.length;
}

export function applySliderChange(state: UiState, jointIndex: number,
                                  value: number): UiState {
  const sliders = state.sliders.slice();
  sliders[jointIndex] = clampAngle(value);
  return { ...state, sliders };
}

export function recordCommandSent(state: UiState, jointIndex: number,
                                  seq: number): UiState {
  const pendingByJoint = new Map(state.pendingByJoint);
  pendingByJoint.set(jointIndex, seq);
  return { ...state, pendingByJoint, nextSeq: Math.max(state.nextSeq, seq + 1) };
}

export function applyAck(state: UiState, ack: Ack): UiState {
  const next: UiState = { ...state, ackedAngles: ack.anglesDeg.slice(),
                          gripClosed: ack.grip };
  const pendingByJoint = new Map(state.pendingByJoint);
  for (const [jointIndex, seq] of pendingByJoint) {
    if (seq !== ack.seq) continue;
    pendingByJoint.delete(jointIndex);
    if (!ack.applied) {
      // rejected command: snap the slider back to the last acked target
      const sliders = next.sliders.slice();
      sliders[jointIndex] = state.lastAckedTargets[jointIndex];
      next.sliders = sliders;
      next.banner = `command ${ack.seq} rejected${ack.error ? `: ${ack.error}` : ""}`;
    } else {
      const lastAckedTargets = next.lastAckedTargets.slice();
      lastAckedTargets[jointIndex] = state.sliders[jointIndex];
      next.lastAckedTargets = lastAckedTargets;
    }
  }
  next.pendingByJoint = pendingByJoint;
  return next;
}

export function applyFrame(state: UiState, frame: DetectionFrame,
                           displayLatencyMs: number): UiState {
  const frames = state.frames.concat([frame]).slice(-FRAME_HISTORY);
  const displayLatenciesMs = state.displayLatenciesMs
    .concat([displayLatencyMs]).slice(-4 * HUD_WINDOW);
  return { ...state, frames, displayLatenciesMs, highlightedDetection: null };
}

export function recordBadFrame(state: UiState): UiState {
  return { ...state, droppedFrames: state.droppedFrames + 1 };
}

export function enqueueOffline(state: UiState, command: PendingCommand): UiState {
  const sendQueue = state.sendQueue.concat([command]);
  let droppedCommands = state.droppedCommands;
  let banner = state.banner;
  while (sendQueue.length > SEND_QUEUE_LIMIT) {
    sendQueue.shift();
    droppedCommands += 1;
    banner = `offline: dropped ${droppedCommands} oldest queued command(s)`;
  }
  return { ...state, sendQueue, droppedCommands, banner };
}

export function drainQueue(state: UiState): [PendingCommand[], UiState] {
  return [state.sendQueue, { ...state, sendQueue: [] }];
}

// Per-joint throttle: at most one send per MIN_SEND_GAP_MS. Returns the
// delay (ms) to wait before sending, or 0 to send immediately.
export class JointThrottle {
  private lastSentMs = new Map<number, number>();

  delayFor(jointIndex: number, nowMs: number): number {
    const last = this.lastSentMs.get(jointIndex);
    if (last === undefined || nowMs - last >= MIN_SEND_GAP_MS) {
      return 0;
    }
    return last + MIN_SEND_GAP_MS - nowMs;
  }

  markSent(jointIndex: number, nowMs: number): void {
    this.lastSentMs.set(jointIndex, nowMs);
  }
}
