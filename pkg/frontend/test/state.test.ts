import { describe, expect, it } from "vitest";

import {
  HUD_WINDOW,
  JointThrottle,
  MIN_SEND_GAP_MS,
  SEND_QUEUE_LIMIT,
  applyAck,
  applyFrame,
  applySliderChange,
  drainQueue,
  enqueueOffline,
  hudMeanMs,
  initialState,
  recordCommandSent,
} from "../src/state.js";
import { Ack, DetectionFrame } from "../src/wire.js";

function ack(seq: number, applied: boolean, error?: string): Ack {
  return { seq, applied, ackedAtUs: 1, anglesDeg: [0, 0, 0, 0, 0, 0],
           grip: false, error };
}

function emptyFrame(id: number): DetectionFrame {
  return { frameId: id, capturedAtUs: id * 1000, scene: [], detections: [],
           inferenceMs: 0 };
}

describe("slider state", () => {
  it("clamps slider values into [0, 180]", () => {
    let state = initialState();
    state = applySliderChange(state, 2, 240);
    expect(state.sliders[2]).toBe(180);
    state = applySliderChange(state, 2, -10);
    expect(state.sliders[2]).toBe(0);
  });

  it("snaps back to the last acked target on rejection", () => {
    let state = initialState();
    state = applySliderChange(state, 1, 60);
    state = recordCommandSent(state, 1, 5);
    state = applyAck(state, ack(5, true));      // 60 acked
    expect(state.lastAckedTargets[1]).toBe(60);

    state = applySliderChange(state, 1, 140);
    state = recordCommandSent(state, 1, 6);
    state = applyAck(state, ack(6, false, "stale-seq"));
    expect(state.sliders[1]).toBe(60);          // snapped back
    expect(state.banner).toContain("rejected");
  });
});

describe("offline queue", () => {
  it("keeps at most 50 commands, dropping the oldest with a banner", () => {
    let state = initialState();
    for (let i = 0; i < 60; i++) {
      state = enqueueOffline(state, { joint: "J1", targetDeg: i, seq: i + 1 });
    }
    expect(state.sendQueue.length).toBe(SEND_QUEUE_LIMIT);
    expect(state.sendQueue[0].seq).toBe(11);   // ten oldest dropped
    expect(state.droppedCommands).toBe(10);
    expect(state.banner).toContain("dropped 10");
    const [queued, drained] = drainQueue(state);
    expect(queued.length).toBe(50);
    expect(drained.sendQueue.length).toBe(0);
  });
});

describe("HUD latency window", () => {
  it("averages only the last 30 display latencies", () => {
    let state = initialState();
    for (let i = 0; i < 100; i++) {
      state = applyFrame(state, emptyFrame(i), i < 70 ? 1000 : 50);
    }
    expect(hudMeanMs(state)).toBe(50);  // the old 1000 ms values aged out
    expect(state.frames.length).toBeLessThanOrEqual(8);
  });

  it("is null before any frame arrived", () => {
    expect(hudMeanMs(initialState())).toBeNull();
  });
});

describe("per-joint throttle", () => {
  it("allows at most 10 sends per second per joint under a 100 Hz drag", () => {
    const throttle = new JointThrottle();
    let sends = 0;
    let pendingAt: number | null = null;
    for (let event = 0; event < 100; event++) {
      const nowMs = event * 10; // 100 events over one second
      if (pendingAt !== null && pendingAt <= nowMs) {
        throttle.markSent(0, pendingAt);
        sends++;
        pendingAt = null;
      }
      const delay = throttle.delayFor(0, nowMs);
      if (delay <= 0) {
        throttle.markSent(0, nowMs);
        sends++;
      } else {
        pendingAt = nowMs + delay; // trailing send replaces any pending one
      }
    }
    expect(sends).toBeLessThanOrEqual(10);
    expect(sends).toBeGreaterThanOrEqual(9);
  });

  it("leaves other joints unaffected", () => {
    const throttle = new JointThrottle();
    throttle.markSent(0, 0);
    expect(throttle.delayFor(0, 10)).toBe(MIN_SEND_GAP_MS - 10);
    expect(throttle.delayFor(1, 10)).toBe(0);
  });
});

describe("frame history", () => {
  it("tracks malformed frames in a counter", () => {
    let state = initialState();
    for (let i = 0; i < 3; i++) {
      state = { ...state, droppedFrames: state.droppedFrames + 1 };
    }
    expect(state.droppedFrames).toBe(3);
  });

  it("hud window constant matches the contract", () => {
    expect(HUD_WINDOW).toBe(30);
  });
});
