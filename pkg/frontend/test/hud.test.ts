// HUD gate: the rolling display-latency mean shown to the operator must sit
// within 10 ms of the mean the benchmark harness reported for the same run
// (fixtures/console_fixtures.json is generated from that run).

import { describe, expect, it } from "vitest";

import fixtures from "../fixtures/console_fixtures.json";
import { applyFrame, hudMeanMs, initialState } from "../src/state.js";
import { DetectionFrame } from "../src/wire.js";

describe("HUD latency vs benchmark", () => {
  it("rolling mean lands within 10 ms of the bench-measured mean", () => {
    let state = initialState();
    for (const sample of fixtures.hud.frames) {
      const frame: DetectionFrame = {
        frameId: 0,
        capturedAtUs: sample.captured_at_us,
        scene: [],
        detections: [],
        inferenceMs: 200,
      };
      const latencyMs = (sample.shown_at_us - sample.captured_at_us) / 1000;
      state = applyFrame(state, frame, latencyMs);
    }
    const hud = hudMeanMs(state);
    expect(hud).not.toBeNull();
    expect(Math.abs(hud! - fixtures.hud.bench_mean_ms)).toBeLessThanOrEqual(10);
  });

  it("fixture run covers the full sample budget", () => {
    expect(fixtures.hud.frames.length).toBe(fixtures.hud.n);
  });
});
