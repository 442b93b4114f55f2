"""Binary frame descriptor format (magic FRM1, big-endian throughout).

Layout: magic, u64 frame_id, u64 captured_at_us, u16 n_truth,
n_truth x (u8 class, 4 x f32 box), u16 n_det,
n_det x (u8 class, 4 x f32 box, f32 conf), u16 inference_ms.
Box floats are f32 on the wire, so decode(encode(x)) quantizes once and is
stable thereafter.
"""

from __future__ import annotations

import struct

from .model import BBox, Detection, DetectionFrame, SceneObject

MAGIC = b"FRM1"


class FrameDecodeError(ValueError):
    pass


def encode_frame(frame: DetectionFrame) -> bytes:
    parts = [MAGIC, struct.pack(">QQ", frame.frame_id, frame.captured_at_us),
             struct.pack(">H", len(frame.scene))]
    for obj in frame.scene:
        parts.append(struct.pack(">Bffff", obj.class_id,
                                 obj.box.cx, obj.box.cy, obj.box.w, obj.box.h))
    parts.append(struct.pack(">H", len(frame.detections)))
    for det in frame.detections:
        parts.append(struct.pack(">Bfffff", det.class_id,
                                 det.box.cx, det.box.cy, det.box.w, det.box.h,
                                 det.confidence))
    parts.append(struct.pack(">H", frame.inference_ms))
    return b"".join(parts)


def decode_frame(data: bytes) -> DetectionFrame:
    if data[:4] != MAGIC:
        raise FrameDecodeError(f"bad magic {data[:4]!r}")
    try:
        frame_id, captured_at = struct.unpack_from(">QQ", data, 4)
        off = 20
        (n_truth,) = struct.unpack_from(">H", data, off)
        off += 2
        scene = []
        for _ in range(n_truth):
            cls, cx, cy, w, h = struct.unpack_from(">Bffff", data, off)
            off += 17
            scene.append(SceneObject(cls, BBox(cx, cy, w, h)))
        (n_det,) = struct.unpack_from(">H", data, off)
        off += 2
        detections = []
        for _ in range(n_det):
            cls, cx, cy, w, h, conf = struct.unpack_from(">Bfffff", data, off)
            off += 21
            detections.append(Detection(BBox(cx, cy, w, h), cls, conf))
        (inference_ms,) = struct.unpack_from(">H", data, off)
        off += 2
    except struct.error as exc:
        raise FrameDecodeError(f"truncated frame: {exc}") from exc
    if off != len(data):
        raise FrameDecodeError(f"{len(data) - off} trailing bytes")
    return DetectionFrame(frame_id, captured_at, tuple(scene),
                          tuple(detections), inference_ms)
