#!/usr/bin/env python3
"""Regenerate the operator-console test fixtures (frontend/fixtures/).

The HUD fixture pairs one video scenario's per-frame timestamps with the
mean the benchmark reports for that same run, so the console's rolling HUD
number can be checked against the harness. The render fixtures are encoded
frames with 0/2/8 detections; control payload fixtures pin the canonical
command JSON bytes across both implementations.
"""

import base64
import json
import os
import random
import sys

sys.path.insert(0, "src")

from teleosim.actuator import ControlMessage
from teleosim.bench import WARMUP_US, LatencySample, stats_from_samples
from teleosim.clock import EventLoop
from teleosim.config import ScenarioConfig
from teleosim.perception import (
    DetectionFrame,
    NoiseModel,
    annotate,
    detect,
    encode_frame,
    make_scene,
)
from teleosim.session import SessionService

OUT = os.path.join(os.path.dirname(__file__), "..", "frontend", "fixtures",
                   "console_fixtures.json")


def hud_fixture(route="local", seed=42, n=100):
    cfg = ScenarioConfig(route=route, seed=seed, n=n, overlay=True)
    loop = EventLoop()
    service = SessionService(loop, cfg)
    room = service.create_room("fixture", "arm1", route)
    part = room.join("op1")
    loop.run_until_idle(limit_us=WARMUP_US)
    frames = []

    def on_frame(frame, shown_at_us):
        if len(frames) < n:
            frames.append({"captured_at_us": frame.captured_at_us,
                           "shown_at_us": shown_at_us})
        if len(frames) >= n:
            room.camera.stop()

    part.frame_callbacks.append(on_frame)
    room.camera.start()
    loop.run_until_idle(limit_us=WARMUP_US + round(n * 1e6 / cfg.fps) + 30_000_000)
    samples = [LatencySample("video_overlay", f["captured_at_us"],
                             f["shown_at_us"], route, "stream") for f in frames]
    stats = stats_from_samples(samples)
    hud_window = samples[-30:]
    hud_mean = sum(s.latency_ms for s in hud_window) / len(hud_window)
    assert abs(hud_mean - stats.mean_ms) <= 10.0, "fixture would violate the HUD gate"
    return {"route": route, "seed": seed, "n": n,
            "bench_mean_ms": stats.mean_ms, "frames": frames}


def render_fixtures():
    rng = random.Random(7)
    scene = make_scene(rng, n_objects=4)
    empty = DetectionFrame(1, 1_000_000, scene)
    two = annotate(empty, detect(scene[:2], NoiseModel(sigma_px=2.0, fp_rate=0.0),
                                 random.Random(3)), 200)
    eight_dets = []
    det_rng = random.Random(9)
    for obj in scene * 2:
        eight_dets.extend(detect([obj], NoiseModel(sigma_px=4.0, fp_rate=0.0), det_rng))
    eight = annotate(DetectionFrame(3, 3_000_000, scene), eight_dets[:8], 200)
    out = []
    for name, frame in (("no_detections", empty), ("two_detections", two),
                        ("eight_detections", eight)):
        out.append({"name": name,
                    "n_detections": len(frame.detections),
                    "frm1_base64": base64.b64encode(encode_frame(frame)).decode()})
    return out


def control_payload_fixtures():
    cases = [(2, "J2", 45.0, 1_500_000), (7, "J6", 180.0, 2_000_000),
             (9, "GRIP", 180.0, 2_500_000)]
    out = []
    for seq, joint, target, issued in cases:
        msg = ControlMessage(seq=seq, joint=joint, target_deg=target,
                             issued_at_us=issued)
        out.append({"seq": seq, "joint": joint, "target_deg": target,
                    "issued_at_us": issued,
                    "payload": msg.to_json().decode()})
    return out


def main() -> int:
    fixture = {
        "hud": hud_fixture(),
        "render_frames": render_fixtures(),
        "control_payloads": control_payload_fixtures(),
    }
    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    with open(OUT, "w", encoding="utf-8") as fh:
        json.dump(fixture, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {os.path.normpath(OUT)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
