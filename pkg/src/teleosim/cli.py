"""Command-line entry point: daemons, live serve, and benchmark scenarios.

Exit codes: 0 success, 1 scenario ran but a tolerance gate failed (or the
measurement itself degenerated), 2 invalid configuration or flags.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .bench import ScenarioError, compare_transports, run_grasp_campaign
from .config import ConfigError, ScenarioConfig, load_profile_file, load_scenario
from . import reports

log = logging.getLogger("teleosim")


class Once(argparse.Action):
    """Reject a flag given twice instead of silently keeping the last value."""

    def __call__(self, parser, namespace, values, option_string=None):
        marker = f"_seen_{self.dest}"
        if getattr(namespace, marker, False):
            parser.error(f"conflicting flags: {option_string} given more than once")
        setattr(namespace, marker, True)
        setattr(namespace, self.dest, values)


def _add_common_bench_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", action=Once, help="scenario INI file")
    parser.add_argument("--route", action=Once, help="route/profile name")
    parser.add_argument("--transport", action=Once, choices=("pubsub", "stream"))
    parser.add_argument("--seed", action=Once, type=int)
    parser.add_argument("--n", action=Once, type=int)
    parser.add_argument("--out", action=Once, help="report output directory")
    parser.add_argument("--profile-file", action=Once,
                        help="INI file of network profile overrides")
    parser.add_argument("--realtime", action="store_true",
                        help="pace scenarios against the wall clock")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teleosim",
        description="Teleoperation testbed: brokers, arms, emulated WANs, "
                    "and reproducible latency/grasp benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_broker = sub.add_parser("broker", help="run a TCP pub/sub broker")
    p_broker.add_argument("--host", default="127.0.0.1", action=Once)
    p_broker.add_argument("--port", type=int, default=1883, action=Once)

    p_arm = sub.add_parser("arm", help="run an actuator node against a broker")
    p_arm.add_argument("--host", default="127.0.0.1", action=Once)
    p_arm.add_argument("--port", type=int, default=1883, action=Once)
    p_arm.add_argument("--arm-id", default="arm1", action=Once)

    p_per = sub.add_parser("perceive", help="publish annotated frames to a broker")
    p_per.add_argument("--host", default="127.0.0.1", action=Once)
    p_per.add_argument("--port", type=int, default=1883, action=Once)
    p_per.add_argument("--arm-id", default="arm1", action=Once)
    p_per.add_argument("--fps", type=float, default=5.0, action=Once)
    p_per.add_argument("--seed", type=int, default=42, action=Once)
    p_per.add_argument("--no-overlay", action="store_true")

    p_serve = sub.add_parser("serve", help="host a live room + browser console")
    p_serve.add_argument("--config", action=Once)
    p_serve.add_argument("--host", default="127.0.0.1", action=Once)
    p_serve.add_argument("--port", type=int, default=8765, action=Once)
    p_serve.add_argument("--route", action=Once)
    p_serve.add_argument("--profile-file", action=Once)
    p_serve.add_argument("--static-dir", action=Once,
                         help="console assets directory (default: frontend/dist)")

    p_bench = sub.add_parser("bench", help="run benchmark scenarios")
    bench_sub = p_bench.add_subparsers(dest="scenario", required=True)
    for name, help_text in (
            ("table2", "per-route control/video latency matrix"),
            ("table3", "pub/sub vs ordered-stream comparison"),
            ("grasp", "detector-guided grasp campaign")):
        p = bench_sub.add_parser(name, help=help_text)
        _add_common_bench_flags(p)
    return parser


def _scenario_from_args(args, defaults: dict | None = None) -> ScenarioConfig:
    overrides: dict = dict(defaults or {})
    for key in ("seed", "n", "transport", "realtime"):
        value = getattr(args, key, None)
        if value not in (None, False):
            overrides[key] = value
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "profile_file", None):
        overrides["profiles"] = load_profile_file(args.profile_file)
    if getattr(args, "route", None):
        overrides["route"] = args.route
    return load_scenario(getattr(args, "config", None), overrides)


def _emit(paths: dict[str, str], text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.write("report files: " + " ".join(sorted(paths.values())) + "\n")


def _cmd_table2(args) -> int:
    cfg = _scenario_from_args(args)
    routes = (args.route,) if args.route else None
    report = reports.run_latency_matrix(cfg, routes)
    text = reports.matrix_text(report)
    paths = reports.write_report(cfg.out_dir, "table2", text,
                                 reports.matrix_csv(report),
                                 reports.matrix_json(report))
    _emit(paths, text)
    return 0 if report.ok else 1


def _cmd_table3(args) -> int:
    cfg = _scenario_from_args(args, {"route": "constrained", "n": 300})
    report = compare_transports(cfg.route, cfg.n, cfg.seed, cfg)
    text = reports.comparison_text(report)
    paths = reports.write_report(cfg.out_dir, "table3", text,
                                 reports.comparison_csv(report),
                                 reports.comparison_json(report))
    _emit(paths, text)
    return 0 if report.ok else 1


def _cmd_grasp(args) -> int:
    cfg = _scenario_from_args(args, {"route": "japan", "n": 300})
    report = run_grasp_campaign(cfg.route, cfg.n, cfg.seed, cfg)
    text = reports.campaign_text(report)
    paths = reports.write_report(cfg.out_dir, "grasp", text,
                                 reports.campaign_csv(report),
                                 reports.campaign_json(report))
    _emit(paths, text)
    ok = (0.90 <= report.success_rate <= 0.98
          and all(w / t >= 0.85 for _, t, w in report.per_class if t))
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("TELEOP_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "broker":
            from .tcpnet import serve_broker
            serve_broker(args.host, args.port)
            return 0
        if args.command == "arm":
            from .tcpnet import run_arm_node
            run_arm_node(args.host, args.port, args.arm_id)
            return 0
        if args.command == "perceive":
            from .tcpnet import run_frame_publisher
            run_frame_publisher(args.host, args.port, args.arm_id,
                                fps=args.fps, overlay=not args.no_overlay,
                                seed=args.seed)
            return 0
        if args.command == "serve":
            from .wsbridge import serve_console
            overrides = {"route": args.route} if args.route else {}
            if args.profile_file:
                overrides["profiles"] = load_profile_file(args.profile_file)
            cfg = load_scenario(args.config, overrides)
            static_dir = args.static_dir or os.path.join(
                os.getcwd(), "frontend", "dist")
            serve_console(cfg, args.host, args.port, static_dir=static_dir)
            return 0
        if args.command == "bench":
            if args.scenario == "table2":
                return _cmd_table2(args)
            if args.scenario == "table3":
                return _cmd_table3(args)
            return _cmd_grasp(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    return 2


if __name__ == "__main__":
    sys.exit(main())
