"""Exact detection metrics: IoU, per-class AP, and the summary report.

Matching is greedy in descending confidence: each prediction claims the
highest-IoU unmatched ground truth of its image and class with IoU at or
above the threshold. Ties are broken deterministically against a canonical
internal ordering (image, box coordinates), so every metric is invariant to
the order predictions and ground truths are supplied in.

AP uses all-point interpolation: the area under the monotone (right-to-left
maximum) precision envelope. A class with no ground-truth instances has
undefined AP, reported as absent rather than zero.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .model import BBox, DEFAULT_CLASS_NAMES

IOU_THRESHOLDS_50_95 = tuple((50 + 5 * k) / 100 for k in range(10))


@dataclass(frozen=True)
class PredBox:
    image_id: int
    class_id: int
    box: BBox
    confidence: float


@dataclass(frozen=True)
class GtBox:
    image_id: int
    class_id: int
    box: BBox


def iou(a: BBox, b: BBox) -> float:
    if a == b:
        return 1.0
    ax0, ax1 = a.cx - a.w / 2, a.cx + a.w / 2
    ay0, ay1 = a.cy - a.h / 2, a.cy + a.h / 2
    bx0, bx1 = b.cx - b.w / 2, b.cx + b.w / 2
    by0, by1 = b.cy - b.h / 2, b.cy + b.h / 2
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def _canon_preds(preds: list[PredBox]) -> list[PredBox]:
    return sorted(preds, key=lambda p: (-p.confidence, p.image_id,
                                        p.box.cx, p.box.cy, p.box.w, p.box.h))


def _canon_gts(gts: list[GtBox]) -> list[GtBox]:
    return sorted(gts, key=lambda g: (g.image_id, g.box.cx, g.box.cy, g.box.w, g.box.h))


def _tp_flags(preds: list[PredBox], gts: list[GtBox], iou_thresh: float) -> list[bool]:
    """TP flag per prediction in canonical rank order (same class assumed)."""
    order = _canon_preds(preds)
    gt_order = _canon_gts(gts)
    by_image: dict[int, list[int]] = {}
    for idx, gt in enumerate(gt_order):
        by_image.setdefault(gt.image_id, []).append(idx)
    matched: set[int] = set()
    flags = []
    for pred in order:
        best_idx, best_iou = -1, 0.0
        for idx in by_image.get(pred.image_id, ()):
            if idx in matched:
                continue
            value = iou(pred.box, gt_order[idx].box)
            if value >= iou_thresh and value > best_iou:
                best_idx, best_iou = idx, value
        if best_idx >= 0:
            matched.add(best_idx)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(preds: list[PredBox], gts: list[GtBox], class_id: int,
                      iou_thresh: float) -> float | None:
    cls_gts = [g for g in gts if g.class_id == class_id]
    if not cls_gts:
        return None
    cls_preds = [p for p in preds if p.class_id == class_id]
    if not cls_preds:
        return 0.0
    flags = _tp_flags(cls_preds, cls_gts, iou_thresh)
    n_gt = len(cls_gts)
    recalls, precisions = [], []
    tp = 0
    for rank, flag in enumerate(flags, start=1):
        tp += int(flag)
        recalls.append(tp / n_gt)
        precisions.append(tp / rank)
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap, prev_recall = 0.0, 0.0
    for r, p in zip(recalls, precisions):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return ap


def _best_f1_pr(preds: list[PredBox], gts: list[GtBox], class_id: int,
                iou_thresh: float = 0.5) -> tuple[float | None, float]:
    """(precision, recall) at the confidence cutoff maximizing F1.

    No predictions leaves precision undefined; no ground truth leaves
    both undefined (callers skip such classes).
    """
    cls_gts = [g for g in gts if g.class_id == class_id]
    cls_preds = [p for p in preds if p.class_id == class_id]
    if not cls_preds:
        return None, 0.0
    if not cls_gts:
        return 0.0, 0.0
    flags = _tp_flags(cls_preds, cls_gts, iou_thresh)
    n_gt = len(cls_gts)
    best = (-1.0, None, 0.0)
    tp = 0
    for rank, flag in enumerate(flags, start=1):
        tp += int(flag)
        precision = tp / rank
        recall = tp / n_gt
        f1 = 2 * precision * recall / (precision + recall) if tp else 0.0
        if f1 > best[0]:
            best = (f1, precision, recall)
    return best[1], best[2]


@dataclass(frozen=True)
class MetricsRow:
    label: str
    images: int
    instances: int
    box_p: float | None
    r: float | None
    map50: float | None
    map50_95: float | None


@dataclass(frozen=True)
class DetectionMetrics:
    rows: tuple[MetricsRow, ...]

    @property
    def all_row(self) -> MetricsRow:
        return self.rows[0]


def map_metric(preds: list[PredBox], gts: list[GtBox],
               class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES) -> DetectionMetrics:
    per_class_rows = []
    for class_id, name in enumerate(class_names):
        cls_gts = [g for g in gts if g.class_id == class_id]
        images = len({g.image_id for g in cls_gts})
        instances = len(cls_gts)
        if instances == 0:
            per_class_rows.append(MetricsRow(name, 0, 0, None, None, None, None))
            continue
        box_p, recall = _best_f1_pr(preds, gts, class_id)
        ap50 = average_precision(preds, gts, class_id, 0.5)
        ap_span = [average_precision(preds, gts, class_id, t)
                   for t in IOU_THRESHOLDS_50_95]
        ap50_95 = sum(ap_span) / len(ap_span)
        per_class_rows.append(MetricsRow(name, images, instances,
                                         box_p, recall, ap50, ap50_95))
    present = [row for row in per_class_rows if row.instances > 0]

    def mean_defined(values):
        defined = [v for v in values if v is not None]
        return sum(defined) / len(defined) if defined else None

    all_row = MetricsRow(
        "all",
        len({g.image_id for g in gts}),
        len(gts),
        mean_defined([row.box_p for row in present]),
        mean_defined([row.r for row in present]) if present else 0.0,
        mean_defined([row.map50 for row in present]),
        mean_defined([row.map50_95 for row in present]),
    )
    return DetectionMetrics((all_row, *per_class_rows))


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def metrics_table(metrics: DetectionMetrics) -> str:
    """Fixed-width summary, one row per class plus the aggregate first."""
    headers = ("Class", "Images", "Instances", "Box(P)", "R", "mAP@50-95")
    body = [(row.label, str(row.images), str(row.instances),
             _fmt(row.box_p), _fmt(row.r), _fmt(row.map50_95))
            for row in metrics.rows]
    widths = [max(len(h), *(len(line[i]) for line in body))
              for i, h in enumerate(headers)]
    out = io.StringIO()
    out.write("  ".join(h.ljust(widths[i]) if i == 0 else h.rjust(widths[i])
                        for i, h in enumerate(headers)) + "\n")
    for line in body:
        out.write("  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                            for i, cell in enumerate(line)) + "\n")
    return out.getvalue()


def metrics_csv(metrics: DetectionMetrics) -> str:
    lines = ["class,images,instances,box_p,r,map50,map50_95"]
    for row in metrics.rows:
        cells = [row.label, str(row.images), str(row.instances)]
        for value in (row.box_p, row.r, row.map50, row.map50_95):
            cells.append("" if value is None else repr(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
