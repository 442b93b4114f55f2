from .model import (
    BBox,
    Detection,
    DetectionFrame,
    FrameSource,
    InferenceRelay,
    NoiseModel,
    SceneObject,
    DEFAULT_CLASS_NAMES,
    DEFAULT_INFERENCE_MS,
    annotate,
    detect,
    make_scene,
)
from .wire import FrameDecodeError, decode_frame, encode_frame
from .metrics import (
    DetectionMetrics,
    GtBox,
    MetricsRow,
    PredBox,
    average_precision,
    iou,
    map_metric,
    metrics_csv,
    metrics_table,
)

__all__ = [
    "BBox", "Detection", "DetectionFrame", "SceneObject", "NoiseModel",
    "FrameSource", "InferenceRelay", "DEFAULT_CLASS_NAMES", "DEFAULT_INFERENCE_MS",
    "annotate", "detect", "make_scene",
    "FrameDecodeError", "decode_frame", "encode_frame",
    "DetectionMetrics", "MetricsRow", "PredBox", "GtBox",
    "average_precision", "iou", "map_metric", "metrics_csv", "metrics_table",
]
