#!/usr/bin/env python3
"""Pub/sub vs ordered-stream comparison across several seeds.

Usage: python scripts/run_transport_comparison.py [n] [seed seed ...]
"""

import sys

sys.path.insert(0, "src")

from teleosim.bench import compare_transports
from teleosim.reports import comparison_text


def main() -> int:
    args = [int(a) for a in sys.argv[1:]]
    n = args[0] if args else 300
    seeds = args[1:] or [1, 2, 3, 4, 5]
    all_ok = True
    for seed in seeds:
        report = compare_transports("constrained", n, seed)
        print(comparison_text(report))
        all_ok = all_ok and report.ok
    return 0 if all_ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
