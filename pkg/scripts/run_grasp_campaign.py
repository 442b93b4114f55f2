#!/usr/bin/env python3
"""Detector-guided grasp campaign over an emulated VPN route.

Usage: python scripts/run_grasp_campaign.py [route] [trials] [seed]
"""

import sys

sys.path.insert(0, "src")

from teleosim.bench import run_grasp_campaign
from teleosim.reports import campaign_text


def main() -> int:
    route = sys.argv[1] if len(sys.argv) > 1 else "japan"
    trials = int(sys.argv[2]) if len(sys.argv) > 2 else 300
    seed = int(sys.argv[3]) if len(sys.argv) > 3 else 42
    report = run_grasp_campaign(route, trials, seed)
    print(campaign_text(report), end="")
    return 0 if 0.90 <= report.success_rate <= 0.98 else 1


if __name__ == "__main__":
    raise SystemExit(main())
