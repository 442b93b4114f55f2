"""Scene model and the simulated detector.

Frames carry vector scene descriptors (ground-truth boxes) instead of
pixels; the detector perturbs those descriptors per a NoiseModel, so
detection quality is a handful of interpretable knobs rather than a
trained network.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from ..clock import EventLoop

DEFAULT_CLASS_NAMES = ("forefoot", "body", "hind_foot", "soles_of_the_feet")
DEFAULT_INFERENCE_MS = 200


@dataclass(frozen=True)
class BBox:
    cx: float
    cy: float
    w: float
    h: float

    def validate(self) -> "BBox":
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center outside frame: ({self.cx}, {self.cy})")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"non-positive box size: {self.w}x{self.h}")
        if (self.cx + self.w / 2 <= 0 or self.cx - self.w / 2 >= 1
                or self.cy + self.h / 2 <= 0 or self.cy - self.h / 2 >= 1):
            raise ValueError("box does not intersect the frame")
        return self


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    box: BBox


@dataclass(frozen=True)
class Detection:
    box: BBox
    class_id: int
    confidence: float


@dataclass(frozen=True)
class DetectionFrame:
    frame_id: int
    captured_at_us: int
    scene: tuple[SceneObject, ...]
    detections: tuple[Detection, ...] = ()
    inference_ms: int = 0


@dataclass(frozen=True)
class NoiseModel:
    recall_p: float = 0.999
    sigma_px: float = 5.5
    frame_px: int = 640
    size_jitter: float = 0.05
    conf_lo: float = 0.5
    conf_hi: float = 0.95
    fp_rate: float = 0.05
    n_classes: int = len(DEFAULT_CLASS_NAMES)

    @classmethod
    def zero(cls, n_classes: int = len(DEFAULT_CLASS_NAMES)) -> "NoiseModel":
        return cls(recall_p=1.0, sigma_px=0.0, size_jitter=0.0,
                   conf_lo=1.0, conf_hi=1.0, fp_rate=0.0, n_classes=n_classes)


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    limit = math.exp(-lam)
    k, p = 0, 1.0
    while True:
        p *= rng.random()
        if p < limit:
            return k
        k += 1


def detect(scene: Sequence[SceneObject], noise: NoiseModel,
           rng: random.Random) -> list[Detection]:
    """Per object: Bernoulli recall, Gaussian center shift, uniform size and
    confidence jitter; plus Poisson(fp_rate) spurious boxes per frame."""
    out: list[Detection] = []
    for obj in scene:
        if rng.random() >= noise.recall_p:
            continue
        box = obj.box
        cx = box.cx + rng.gauss(0.0, noise.sigma_px) / noise.frame_px
        cy = box.cy + rng.gauss(0.0, noise.sigma_px) / noise.frame_px
        w = box.w * (1.0 + rng.uniform(-noise.size_jitter, noise.size_jitter))
        h = box.h * (1.0 + rng.uniform(-noise.size_jitter, noise.size_jitter))
        conf = rng.uniform(noise.conf_lo, noise.conf_hi)
        out.append(Detection(BBox(cx, cy, w, h), obj.class_id, conf))
    for _ in range(_poisson(rng, noise.fp_rate)):
        box = BBox(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                   rng.uniform(0.05, 0.15), rng.uniform(0.05, 0.15))
        out.append(Detection(box, rng.randrange(noise.n_classes),
                             rng.uniform(noise.conf_lo, noise.conf_hi)))
    return out


def annotate(frame: DetectionFrame, detections: Sequence[Detection],
             inference_ms: int = DEFAULT_INFERENCE_MS) -> DetectionFrame:
    """Attach overlay boxes and stamp the inference delay that produced them."""
    return replace(frame, detections=tuple(detections), inference_ms=inference_ms)


def make_scene(rng: random.Random, n_objects: int = 3,
               n_classes: int = len(DEFAULT_CLASS_NAMES),
               target_class: int | None = None) -> tuple[SceneObject, ...]:
    """Desk scene: distinct-class objects across the front workspace band.

    The first object is the manipulation target (class forced when given).
    Horizontal position maps to base yaw, so targets stay in [0.1, 0.9].
    """
    classes = list(range(n_classes))
    rng.shuffle(classes)
    if target_class is not None:
        if target_class in classes:
            classes.remove(target_class)
        classes.insert(0, target_class)
    objects = []
    for i in range(min(n_objects, len(classes))):
        box = BBox(cx=rng.uniform(0.1, 0.9), cy=rng.uniform(0.2, 0.8),
                   w=rng.uniform(0.08, 0.16), h=rng.uniform(0.08, 0.16))
        objects.append(SceneObject(classes[i], box.validate()))
    return tuple(objects)


class FrameSource:
    """Camera stand-in: emits encoded frames at a fixed rate.

    captured_at is stamped at the tick; the configured media pipeline delay
    (capture, encode, jitter buffer) elapses before the frame reaches the
    sink, which is where most of the video path's latency lives.
    """

    def __init__(self, loop: EventLoop, scene_provider: Callable[[], tuple[SceneObject, ...]],
                 sink: Callable[[bytes], None], fps: float = 5.0,
                 pipeline_ms: float = 380.0):
        self.loop = loop
        self.scene_provider = scene_provider
        self.sink = sink
        self.interval_us = round(1e6 / fps)
        self.pipeline_ms = pipeline_ms
        self.next_frame_id = 1
        self._running = False

    def start(self) -> None:
        if not self._running:
            self._running = True
            self.loop.call_later(self.interval_us, self._tick)

    def stop(self) -> None:
        self._running = False

    def capture_once(self) -> "DetectionFrame":
        from .wire import encode_frame
        frame = DetectionFrame(self.next_frame_id, self.loop.now_us(),
                               self.scene_provider())
        self.next_frame_id += 1
        data = encode_frame(frame)
        self.loop.call_later(round(self.pipeline_ms * 1000), lambda: self.sink(data))
        return frame

    def _tick(self) -> None:
        if not self._running:
            return
        self.capture_once()
        self.loop.call_later(self.interval_us, self._tick)


class InferenceRelay:
    """Server-side hop: optional detector pass before forwarding a frame."""

    def __init__(self, loop: EventLoop, forward: Callable[[bytes], None],
                 overlay: bool, noise: NoiseModel, rng: random.Random,
                 inference_ms: int = DEFAULT_INFERENCE_MS):
        self.loop = loop
        self.forward = forward
        self.overlay = overlay
        self.noise = noise
        self.rng = rng
        self.inference_ms = inference_ms

    def on_frame(self, data: bytes) -> None:
        if not self.overlay:
            self.forward(data)
            return
        from .wire import decode_frame, encode_frame
        frame = decode_frame(data)
        detections = detect(frame.scene, self.noise, self.rng)
        annotated = encode_frame(annotate(frame, detections, self.inference_ms))
        self.loop.call_later(self.inference_ms * 1000, lambda: self.forward(annotated))
