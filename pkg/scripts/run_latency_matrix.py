#!/usr/bin/env python3
"""Reproduce the per-route latency matrix and print the report.

Usage: python scripts/run_latency_matrix.py [seed] [n]
"""

import sys

sys.path.insert(0, "src")

from teleosim.config import ScenarioConfig
from teleosim.reports import matrix_text, run_latency_matrix


def main() -> int:
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 42
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 100
    report = run_latency_matrix(ScenarioConfig(seed=seed, n=n))
    print(matrix_text(report), end="")
    return 0 if report.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
