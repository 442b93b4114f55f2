"""Acceptance gates. Each test prints one PASS/FAIL line for its criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines live; a
plain `pytest` run exercises the same gates.
"""

import random
import time
from contextlib import contextmanager

import pytest

from teleosim.bench import (
    CONTROL_TARGETS_MS,
    VIDEO_OVERLAY_TARGETS_MS,
    compare_transports,
    run_fallback_continuity,
    run_grasp_campaign,
)
from teleosim.cli import main as cli_main
from teleosim.config import ScenarioConfig
from teleosim.msgbus.packets import Packet, PacketKind, TopicFilter, decode_packet, encode_packet
from teleosim.perception import (
    GtBox,
    NoiseModel,
    PredBox,
    average_precision,
    detect,
    make_scene,
    map_metric,
)
from teleosim.perception.metrics import metrics_table
from teleosim.actuator import REACH_M, Z_BASE, forward_kinematics
from teleosim import reports

from test_broker import build as broker_build
from test_detmetrics import oracle_ap, random_micro_instance
from test_topics import all_filters, all_topics, oracle_match

SEED = 42
TOL = 0.15


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[acceptance] {name}: FAIL")
        raise
    print(f"[acceptance] {name}: PASS")


def test_latency_matrix_reproduction():
    with criterion("latency matrix: control {200,300,500,700} ms, "
                   "overlay video {700,800,1200,1100} ms, +/-15%, n=100"):
        cfg = ScenarioConfig(seed=SEED, n=100)
        started = time.monotonic()
        report = reports.run_latency_matrix(cfg)
        elapsed = time.monotonic() - started
        control = {r.spec.route: r.stats.mean_ms for r in report.rows
                   if r.spec.kind == "control"}
        overlay = {r.spec.route: r.stats.mean_ms for r in report.rows
                   if r.spec.kind == "video" and r.spec.overlay}
        for route, target in CONTROL_TARGETS_MS.items():
            assert abs(control[route] - target) <= TOL * target, \
                (route, control[route], target)
        for route, target in VIDEO_OVERLAY_TARGETS_MS.items():
            assert abs(overlay[route] - target) <= TOL * target, \
                (route, overlay[route], target)
        assert elapsed < 60.0


def test_transport_ordering_five_seeds():
    with criterion("transport comparison: pub/sub faster with Low jitter, "
                   "stream Medium, across 5 seeds"):
        for seed in (1, 2, 3, 4, 5):
            report = compare_transports("constrained", 300, seed)
            assert report.pubsub.mean_ms < report.stream.mean_ms, seed
            assert report.pubsub.jitter_class == "Low", seed
            assert report.stream.jitter_class == "Medium", seed


def test_grasp_campaign_success_band():
    with criterion("grasp campaign: 300 trials on japan, overall in "
                   "[0.90, 0.98], per class >= 0.85"):
        report = run_grasp_campaign("japan", 300, SEED)
        assert 0.90 <= report.success_rate <= 0.98, report.success_rate
        for name, trials, wins in report.per_class:
            assert trials == 75
            assert wins / trials >= 0.85, (name, wins, trials)


def test_ap_matches_exhaustive_oracle():
    with criterion("average precision equals the exhaustive matching oracle "
                   "on 500 micro-instances at 1e-12"):
        rng = random.Random(987654)
        for i in range(500):
            preds, gts = random_micro_instance(rng)
            thresh = rng.choice((0.5, 0.6, 0.75, 0.9))
            expected = oracle_ap(preds, gts, 0, thresh)
            actual = average_precision(preds, gts, 0, thresh)
            if expected is None:
                assert actual is None, i
            else:
                assert actual == pytest.approx(expected, abs=1e-12), i


def test_perfect_detector_identity():
    with criterion("zero-noise detector: precision = recall = mAP@50 = "
                   "mAP@50-95 = 1.0 exactly, report layout check"):
        rng = random.Random(5)
        preds, gts = [], []
        for img in range(50):
            scene = make_scene(random.Random(img), n_objects=3)
            for obj in scene:
                gts.append(GtBox(img, obj.class_id, obj.box))
            for det in detect(scene, NoiseModel.zero(), rng):
                preds.append(PredBox(img, det.class_id, det.box, det.confidence))
        metrics = map_metric(preds, gts)
        row = metrics.all_row
        assert row.box_p == 1.0 and row.r == 1.0
        assert row.map50 == 1.0 and row.map50_95 == 1.0
        header = metrics_table(metrics).splitlines()[0].split()
        assert header == ["Class", "Images", "Instances", "Box(P)", "R", "mAP@50-95"]


def test_messaging_properties():
    with criterion("messaging: 10^4-packet framing round trip, QoS1 "
                   "at-least-once and QoS0 at-most-once under 20% loss, "
                   "topic matcher equals oracle"):
        rng = random.Random(31415)
        topics = ["a", "arm/1/cmd", "arm/1/ack", "x/y/z", "t" * 40]
        for i in range(10_000):
            roll = rng.randrange(7)
            if roll == 0:
                p = Packet(PacketKind.PUBLISH, 0, None, rng.choice(topics),
                           rng.randbytes(rng.randrange(64)))
            elif roll == 1:
                p = Packet(PacketKind.PUBLISH, 1, rng.randrange(1, 65536),
                           rng.choice(topics), rng.randbytes(rng.randrange(64)))
            elif roll == 2:
                p = Packet(PacketKind.SUBSCRIBE, rng.randrange(2),
                           rng.randrange(1, 65536), "arm/+/cmd")
            elif roll == 3:
                p = Packet(PacketKind.PUBACK, 0, rng.randrange(1, 65536))
            elif roll == 4:
                p = Packet(PacketKind.SUBACK, 0, rng.randrange(1, 65536))
            elif roll == 5:
                p = Packet(PacketKind.CONNECT, payload=rng.randbytes(8))
            else:
                p = Packet(rng.choice((PacketKind.CONNACK, PacketKind.PINGREQ,
                                       PacketKind.PINGRESP, PacketKind.DISCONNECT)))
            assert decode_packet(encode_packet(p)) == p, i

        drop_rng = random.Random(606)
        loop, _, (pub, sub), _ = broker_build(
            up_drop=lambda i, d: drop_rng.random() < 0.2,
            down_drop=lambda i, d: drop_rng.random() < 0.2)
        seen = []
        sub.connect()
        sub.subscribe("q/#", 1, lambda t, p: seen.append(int.from_bytes(p, "big")))
        pub.connect()
        loop.run_until_idle()
        for i in range(200):
            pub.publish("q/m", i.to_bytes(4, "big"), qos=1)
        loop.run_until_idle()
        assert set(seen) == set(range(200))  # at-least-once: none lost

        loop0, _, (pub0, sub0), _ = broker_build(
            up_drop=lambda i, d: drop_rng.random() < 0.2,
            down_drop=lambda i, d: drop_rng.random() < 0.2)
        seen0 = []
        sub0.connect()
        sub0.subscribe("z", 0, lambda t, p: seen0.append(p))
        pub0.connect()
        loop0.run_until_idle()
        for i in range(200):
            pub0.publish("z", i.to_bytes(4, "big"), qos=0)
        loop0.run_until_idle()
        assert len(seen0) == len(set(seen0))  # at-most-once: no duplicates

        for filter_text in all_filters():
            f = TopicFilter.parse(filter_text)
            for topic in all_topics():
                assert f.matches(topic) == oracle_match(
                    list(f.levels), topic.split("/")), (filter_text, topic)


def test_bench_reports_deterministic(tmp_path):
    with criterion("bench reruns with identical seed/config are "
                   "byte-identical"):
        pairs = (
            ["bench", "table2", "--route", "local", "--seed", "42"],
            ["bench", "table3", "--seed", "42", "--n", "120"],
            ["bench", "grasp", "--seed", "42", "--n", "60"],
        )
        for args in pairs:
            a = tmp_path / ("a" + args[1])
            b = tmp_path / ("b" + args[1])
            code_a = cli_main(args + ["--out", str(a)])
            code_b = cli_main(args + ["--out", str(b)])
            assert code_a == code_b
            for ext in ("json", "csv", "txt"):
                name = f"{args[1]}.{ext}"
                assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_kinematics_reach_and_reference_poses():
    with criterion("kinematics: reach <= 0.30 m over 10^5 joint vectors, "
                   "reference poses at 1e-9"):
        rng = random.Random(8675309)
        for _ in range(100_000):
            angles = tuple(rng.uniform(0.0, 180.0) for _ in range(6))
            pose = forward_kinematics(angles)
            dist = (pose.x ** 2 + pose.y ** 2 + (pose.z - Z_BASE) ** 2) ** 0.5
            assert dist <= REACH_M + 1e-9
        for angles, expected in (
                ((0, 0, 0, 0, 0, 0), (0.30, 0.0, 0.06)),
                ((90, 0, 0, 0, 0, 0), (0.0, 0.30, 0.06)),
                ((0, 90, 0, 0, 0, 0), (0.0, 0.0, 0.36))):
            pose = forward_kinematics(angles)
            assert abs(pose.x - expected[0]) < 1e-9
            assert abs(pose.y - expected[1]) < 1e-9
            assert abs(pose.z - expected[2]) < 1e-9


def test_fallback_continuity():
    with criterion("offline fallback: after a dead WAN, the next 30 commands "
                   "ack within 3x the local mean"):
        report = run_fallback_continuity(seed=SEED, n_after=30)
        assert len(report.recovered_latencies_ms) == 30
        bound = 3.0 * report.local_mean_ms
        assert all(v <= bound for v in report.recovered_latencies_ms), \
            max(report.recovered_latencies_ms)
