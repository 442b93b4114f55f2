#!/usr/bin/env python3
"""Score the simulated detector on synthetic scenes and print the report.

Usage: python scripts/eval_detector.py [n_images] [seed]
"""

import random
import sys

sys.path.insert(0, "src")

from teleosim.netem import derive_rng
from teleosim.perception import GtBox, NoiseModel, PredBox, detect, make_scene, map_metric
from teleosim.perception.metrics import metrics_csv, metrics_table


def main() -> int:
    n_images = int(sys.argv[1]) if len(sys.argv) > 1 else 500
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 42
    noise = NoiseModel(recall_p=0.999, sigma_px=2.0, fp_rate=0.002,
                       conf_lo=0.6, conf_hi=0.99)
    rng = derive_rng(seed, "detector-eval")
    preds, gts = [], []
    for img in range(n_images):
        scene = make_scene(random.Random(seed * 100_000 + img), n_objects=3)
        for obj in scene:
            gts.append(GtBox(img, obj.class_id, obj.box))
        for det in detect(scene, noise, rng):
            preds.append(PredBox(img, det.class_id, det.box, det.confidence))
    metrics = map_metric(preds, gts)
    print(metrics_table(metrics))
    print(metrics_csv(metrics), end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
