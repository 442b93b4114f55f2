"""Benchmark report assembly and rendering (text / CSV / JSON).

Outputs contain no wall-clock state, only virtual-time measurements and
the config echo, so identical (config, seed) runs serialize byte-identically.
The latency matrix rows carry the calibration targets per route and plane;
the conferencing-baseline column is a static reference for context, clearly
labeled, never measured here.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

from .bench import (
    CONTROL_TARGETS_MS,
    TOLERANCE,
    VIDEO_OVERLAY_TARGETS_MS,
    VIDEO_PLAIN_TARGETS_MS,
    CampaignReport,
    ComparisonReport,
    LatencyStats,
    run_control_latency,
    run_video_latency,
)
from .config import ScenarioConfig


@dataclass(frozen=True)
class MatrixRowSpec:
    label: str
    baseline: str  # static reference: conferencing-tool numbers, not measured
    kind: str      # control | video
    route: str
    overlay: bool
    target_ms: float


MATRIX_ROWS: tuple[MatrixRowSpec, ...] = (
    MatrixRowSpec("Local Control Signal Latency",
                  "~1.0-2.0 s (via shared input methods)", "control", "local",
                  False, CONTROL_TARGETS_MS["local"]),
    MatrixRowSpec("Local Video Latency (No AI Processing)",
                  "0.8-1.2 s", "video", "local", False,
                  VIDEO_PLAIN_TARGETS_MS["local"]),
    MatrixRowSpec("Video Latency with AI Overlay (YOLO)",
                  "Not supported", "video", "local", True,
                  VIDEO_OVERLAY_TARGETS_MS["local"]),
    MatrixRowSpec("Remote Control Latency -- Hong Kong (VPN)",
                  "1.5-2.2 s (shared session delay)", "control", "hongkong",
                  False, CONTROL_TARGETS_MS["hongkong"]),
    MatrixRowSpec("Remote Video Latency -- Hong Kong (VPN)",
                  "1.6-2.0 s", "video", "hongkong", False,
                  VIDEO_PLAIN_TARGETS_MS["hongkong"]),
    MatrixRowSpec("Remote YOLO Video Delay -- Hong Kong",
                  "N/A", "video", "hongkong", True,
                  VIDEO_OVERLAY_TARGETS_MS["hongkong"]),
    MatrixRowSpec("Remote Control Latency -- Japan (VPN)",
                  "1.8-2.5 s", "control", "japan", False,
                  CONTROL_TARGETS_MS["japan"]),
    MatrixRowSpec("Remote YOLO Video Delay -- Japan",
                  "N/A", "video", "japan", True,
                  VIDEO_OVERLAY_TARGETS_MS["japan"]),
    MatrixRowSpec("Remote Control Latency -- Belgium (VPN)",
                  "2.0-3.0 s", "control", "belgium", False,
                  CONTROL_TARGETS_MS["belgium"]),
    MatrixRowSpec("Remote YOLO Video Delay -- Belgium",
                  "N/A", "video", "belgium", True,
                  VIDEO_OVERLAY_TARGETS_MS["belgium"]),
)


@dataclass(frozen=True)
class MatrixRow:
    spec: MatrixRowSpec
    stats: LatencyStats

    @property
    def ok(self) -> bool:
        lo = self.spec.target_ms * (1 - TOLERANCE)
        hi = self.spec.target_ms * (1 + TOLERANCE)
        return lo <= self.stats.mean_ms <= hi


@dataclass(frozen=True)
class MatrixReport:
    rows: tuple[MatrixRow, ...]
    n: int
    seed: int

    @property
    def ok(self) -> bool:
        return all(row.ok for row in self.rows)


def run_latency_matrix(cfg: ScenarioConfig, routes: tuple[str, ...] | None = None,
                       ) -> MatrixReport:
    rows = []
    for spec in MATRIX_ROWS:
        if routes and spec.route not in routes:
            continue
        if spec.kind == "control":
            stats = run_control_latency(spec.route, cfg.transport, cfg.n, cfg.seed, cfg)
        else:
            stats = run_video_latency(spec.route, spec.overlay, cfg.n, cfg.seed, cfg)
        rows.append(MatrixRow(spec, stats))
    return MatrixReport(tuple(rows), cfg.n, cfg.seed)


def matrix_text(report: MatrixReport) -> str:
    lines = [f"Latency matrix over emulated routes (n={report.n} per cell, "
             f"seed={report.seed})", ""]
    label_w = max(len(r.spec.label) for r in report.rows)
    base_w = max(len("Conferencing baseline (static ref)"),
                 max(len(r.spec.baseline) for r in report.rows))
    header = (f"{'Metric / Condition':<{label_w}}  "
              f"{'Conferencing baseline (static ref)':<{base_w}}  "
              f"{'Target':>8}  {'Measured':>9}  {'p95':>9}  {'ok':>3}")
    lines.append(header)
    lines.append("-" * len(header))
    for row in report.rows:
        lines.append(
            f"{row.spec.label:<{label_w}}  {row.spec.baseline:<{base_w}}  "
            f"{row.spec.target_ms:>6.0f}ms  {row.stats.mean_ms:>7.1f}ms  "
            f"{row.stats.p95_ms:>7.1f}ms  {'yes' if row.ok else 'NO':>3}")
    lines.append("")
    lines.append(f"overall: {'PASS' if report.ok else 'FAIL'} "
                 f"(tolerance +/-{TOLERANCE:.0%} of target mean)")
    return "\n".join(lines) + "\n"


def matrix_csv(report: MatrixReport) -> str:
    lines = ["label,route,kind,overlay,target_ms,mean_ms,p50_ms,p95_ms,"
             "stddev_ms,jitter_class,n,ok"]
    for row in report.rows:
        s = row.stats
        lines.append(",".join([
            f'"{row.spec.label}"', row.spec.route, row.spec.kind,
            str(row.spec.overlay).lower(), f"{row.spec.target_ms:.1f}",
            f"{s.mean_ms:.3f}", f"{s.p50_ms:.3f}", f"{s.p95_ms:.3f}",
            f"{s.stddev_ms:.3f}", s.jitter_class, str(s.n),
            str(row.ok).lower()]))
    return "\n".join(lines) + "\n"


def matrix_json(report: MatrixReport) -> str:
    payload = {
        "n": report.n, "seed": report.seed, "ok": report.ok,
        "tolerance": TOLERANCE,
        "rows": [{
            "label": row.spec.label, "route": row.spec.route,
            "kind": row.spec.kind, "overlay": row.spec.overlay,
            "baseline_reference": row.spec.baseline,
            "target_ms": row.spec.target_ms, "ok": row.ok,
            "stats": asdict(row.stats),
        } for row in report.rows],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def comparison_text(report: ComparisonReport) -> str:
    lines = [f"Transport comparison on profile '{report.route}' "
             f"(n={report.n}, seed={report.seed})", "",
             f"{'Transport':<14} {'Avg Latency (ms)':>17} {'p95 (ms)':>9} "
             f"{'Stddev (ms)':>12} {'Stability (Jitter)':>19}"]
    for name, stats in (("PubSub", report.pubsub), ("OrderedStream", report.stream)):
        lines.append(f"{name:<14} {stats.mean_ms:>17.1f} {stats.p95_ms:>9.1f} "
                     f"{stats.stddev_ms:>12.1f} {stats.jitter_class:>19}")
    lines.append("")
    lines.append(f"ordering (PubSub < OrderedStream): "
                 f"{'yes' if report.ordered else 'NO'}")
    lines.append(f"overall: {'PASS' if report.ok else 'FAIL'}")
    return "\n".join(lines) + "\n"


def comparison_csv(report: ComparisonReport) -> str:
    lines = ["transport,mean_ms,p50_ms,p95_ms,stddev_ms,jitter_class,n"]
    for name, stats in (("pubsub", report.pubsub), ("stream", report.stream)):
        lines.append(f"{name},{stats.mean_ms:.3f},{stats.p50_ms:.3f},"
                     f"{stats.p95_ms:.3f},{stats.stddev_ms:.3f},"
                     f"{stats.jitter_class},{stats.n}")
    return "\n".join(lines) + "\n"


def comparison_json(report: ComparisonReport) -> str:
    payload = {
        "route": report.route, "n": report.n, "seed": report.seed,
        "ok": report.ok, "ordered": report.ordered,
        "pubsub": asdict(report.pubsub), "stream": asdict(report.stream),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def campaign_text(report: CampaignReport) -> str:
    lines = [f"Grasp campaign: route={report.route}, trials={report.n_trials}, "
             f"seed={report.seed}", "",
             f"overall success rate: {report.success_rate:.1%} "
             f"({report.successes}/{report.n_trials})", "",
             f"{'Class':<20} {'Trials':>7} {'Successes':>10} {'Rate':>7}"]
    for name, trials, wins in report.per_class:
        rate = wins / trials if trials else 0.0
        lines.append(f"{name:<20} {trials:>7} {wins:>10} {rate:>6.1%}")
    return "\n".join(lines) + "\n"


def campaign_csv(report: CampaignReport) -> str:
    lines = ["class,trials,successes,rate"]
    lines.append(f"all,{report.n_trials},{report.successes},"
                 f"{report.success_rate:.6f}")
    for name, trials, wins in report.per_class:
        rate = wins / trials if trials else 0.0
        lines.append(f"{name},{trials},{wins},{rate:.6f}")
    return "\n".join(lines) + "\n"


def campaign_json(report: CampaignReport) -> str:
    payload = {
        "route": report.route, "n_trials": report.n_trials, "seed": report.seed,
        "successes": report.successes, "success_rate": report.success_rate,
        "per_class": [{"class": name, "trials": trials, "successes": wins,
                       "rate": (wins / trials if trials else 0.0)}
                      for name, trials, wins in report.per_class],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_report(out_dir: str, basename: str, text: str, csv: str, js: str,
                 ) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for ext, content in (("txt", text), ("csv", csv), ("json", js)):
        path = os.path.join(out_dir, f"{basename}.{ext}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(content)
        paths[ext] = path
    return paths
