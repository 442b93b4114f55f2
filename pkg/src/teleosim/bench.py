"""Closed-loop latency and grasp benchmarks over the emulated routes.

All scenarios run on a virtual-time event loop (wall-clock-free, seeded),
so a report is a pure function of (config, seed) and reruns are
byte-identical. Three scenario families:

- latency matrix: per-route command->ack and frame->display latency through
  a cloud-mode session, gated against the calibration targets;
- transport comparison: the same command schedule over the pub/sub path
  (fire-and-forget, broker beside the arm) and the ordered stream (reliable,
  head-of-line blocking), cold-started so connect/handshake overheads are
  inside the measured window;
- grasp campaign: detector-guided pick attempts, class round-robin.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, replace

from .actuator import (
    ArmConfig,
    ArmNode,
    AckMessage,
    CommandDecodeError,
    ControlMessage,
    GraspOutcome,
    JOINTS,
    converged,
    grasp_attempt,
    handle_command,
)
from .clock import EventLoop
from .config import ScenarioConfig
from .msgbus.broker import Broker
from .msgbus.client import Client
from .msgbus.stream import StreamConn
from .netem import Link, derive_rng
from .perception import detect, make_scene
from .session import SessionService, MODE_OFFLINE

WARMUP_US = 3_000_000
GRACE_US = 30_000_000

CONTROL_TARGETS_MS = {"local": 200.0, "hongkong": 300.0, "japan": 500.0, "belgium": 700.0}
VIDEO_OVERLAY_TARGETS_MS = {"local": 700.0, "hongkong": 800.0, "japan": 1200.0, "belgium": 1100.0}
VIDEO_PLAIN_TARGETS_MS = {"local": 500.0, "hongkong": 600.0}
TOLERANCE = 0.15

JITTER_LOW_MS = 20.0
JITTER_HIGH_MS = 60.0


class ScenarioError(RuntimeError):
    pass


def _drive(loop: EventLoop, limit_us: int, realtime: bool) -> None:
    if realtime:
        loop.run_realtime_until(limit_us)
    else:
        loop.run_until_idle(limit_us=limit_us)


@dataclass(frozen=True)
class LatencySample:
    kind: str  # control | video | video_overlay
    sent_at: int
    completed_at: int
    route: str
    transport: str

    def __post_init__(self):
        if self.completed_at < self.sent_at:
            raise ValueError("completed_at precedes sent_at")

    @property
    def latency_ms(self) -> float:
        return (self.completed_at - self.sent_at) / 1000.0


def stats_from_samples(samples: list[LatencySample]) -> LatencyStats:
    return compute_stats([s.latency_ms for s in samples])


@dataclass(frozen=True)
class LatencyStats:
    n: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    stddev_ms: float
    jitter_class: str


def jitter_class(stddev_ms: float) -> str:
    if stddev_ms < JITTER_LOW_MS:
        return "Low"
    if stddev_ms <= JITTER_HIGH_MS:
        return "Medium"
    return "High"


def percentile(sorted_values: list[float], q: float) -> float:
    """Nearest-rank percentile on an already-sorted list."""
    if not sorted_values:
        raise ValueError("no samples")
    rank = max(1, -(-len(sorted_values) * q // 100))  # ceil
    return sorted_values[int(rank) - 1]


def compute_stats(latencies_ms: list[float]) -> LatencyStats:
    if len(latencies_ms) < 30:
        raise ScenarioError(f"need >= 30 samples for stats, got {len(latencies_ms)}")
    ordered = sorted(latencies_ms)
    stddev = statistics.stdev(latencies_ms)
    return LatencyStats(
        n=len(latencies_ms),
        mean_ms=statistics.fmean(latencies_ms),
        p50_ms=percentile(ordered, 50),
        p95_ms=percentile(ordered, 95),
        stddev_ms=stddev,
        jitter_class=jitter_class(stddev),
    )


def _command_for(i: int, seq: int, now_us: int) -> ControlMessage:
    return ControlMessage(seq=seq, joint=JOINTS[i % len(JOINTS)],
                          target_deg=float((i * 37) % 181), issued_at_us=now_us)


# -- latency matrix scenarios (session path) ---------------------------------

def run_control_latency(route: str, transport: str = "pubsub", n: int = 100,
                        seed: int = 42, cfg: ScenarioConfig | None = None) -> LatencyStats:
    base = cfg or ScenarioConfig()
    scenario = replace(base, route=route, transport=transport, n=n, seed=seed)
    if n < 30:
        raise ScenarioError("n must be >= 30")
    if transport == "pubsub":
        samples = _session_control_latencies(scenario)
    else:
        samples = _micro_latencies(scenario, "stream")
    if len(samples) < max(30, n // 2):
        raise ScenarioError(
            f"only {len(samples)}/{n} commands completed on route {route}")
    return stats_from_samples(samples)


def _session_control_latencies(cfg: ScenarioConfig) -> list[LatencySample]:
    loop = EventLoop()
    service = SessionService(loop, cfg)
    room = service.create_room("bench", "arm1", cfg.route)
    part = room.join("op1")
    _drive(loop, WARMUP_US, cfg.realtime)

    sent: dict[int, int] = {}
    done: dict[int, int] = {}

    def on_ack(ack: AckMessage) -> None:
        if ack.seq in sent and ack.seq not in done:
            done[ack.seq] = loop.now_us()

    part.ack_callbacks.append(on_ack)
    period_us = round(1e6 / cfg.command_rate_hz)

    def issue(i: int) -> None:
        seq = room.next_seq()
        now = loop.now_us()
        sent[seq] = now
        room.route_control("op1", _command_for(i, seq, now))

    for i in range(cfg.n):
        loop.call_at(WARMUP_US + i * period_us, lambda i=i: issue(i))
    deadline = WARMUP_US + cfg.n * period_us + GRACE_US
    _drive(loop, deadline, cfg.realtime)
    return [LatencySample("control", sent[s], done[s], cfg.route, "pubsub")
            for s in sorted(sent) if s in done]


def run_video_latency(route: str, overlay: bool, n: int = 100, seed: int = 42,
                      cfg: ScenarioConfig | None = None) -> LatencyStats:
    base = cfg or ScenarioConfig()
    scenario = replace(base, route=route, overlay=overlay, n=n, seed=seed)
    if n < 30:
        raise ScenarioError("n must be >= 30")
    loop = EventLoop()
    service = SessionService(loop, scenario)
    room = service.create_room("bench", "arm1", route)
    part = room.join("op1")
    _drive(loop, WARMUP_US, scenario.realtime)

    kind = "video_overlay" if overlay else "video"
    samples: list[LatencySample] = []

    def on_frame(frame, shown_at_us: int) -> None:
        if len(samples) < n:
            samples.append(LatencySample(kind, frame.captured_at_us,
                                         shown_at_us, route, "stream"))
        if len(samples) >= n:
            room.camera.stop()

    part.frame_callbacks.append(on_frame)
    room.camera.start()
    deadline = WARMUP_US + round(n * 1e6 / scenario.fps) + GRACE_US
    _drive(loop, deadline, scenario.realtime)
    if len(samples) < max(30, n // 2):
        raise ScenarioError(f"only {len(samples)}/{n} frames displayed on {route}")
    return stats_from_samples(samples)


# -- transport comparison (microbench path) -----------------------------------

class _StreamArmResponder:
    """Arm-side endpoint for stream-carried commands: gateway + ack echo."""

    def __init__(self, loop: EventLoop, arm_cfg: ArmConfig, send_ack):
        self.loop = loop
        self.cfg = arm_cfg
        self.send_ack = send_ack
        from .actuator import ArmState
        self.state = ArmState()
        self.last_seen = 0

    def on_message(self, data: bytes) -> None:
        try:
            cmd = ControlMessage.from_json(data)
        except CommandDecodeError:
            return
        self.loop.call_later(round(self.cfg.processing_ms * 1000),
                             lambda: self._apply(cmd))

    def _apply(self, cmd: ControlMessage) -> None:
        self.state, ack, self.last_seen = handle_command(
            cmd, self.state, self.last_seen, self.loop.now_us(),
            self.cfg.staleness_timeout_s)
        self.send_ack(ack.to_json())


def _micro_latencies(cfg: ScenarioConfig, transport: str) -> list[LatencySample]:
    """One emulated hop between operator and arm node, warmed up first.

    The pub/sub side runs fire-and-forget (qos 0) with the broker beside the
    arm; lost commands simply never complete. The stream side is reliable, so
    every loss surfaces as a retransmission delay instead. Session setup and
    the upgrade handshake finish inside the warmup window, keeping the stats
    a steady-state transport comparison.
    """
    loop = EventLoop()
    profile = cfg.profile(cfg.route)
    rng_up = derive_rng(cfg.seed, "micro", cfg.route, "up")
    rng_down = derive_rng(cfg.seed, "micro", cfg.route, "down")

    sent: dict[int, int] = {}
    done: dict[int, int] = {}

    def on_ack_payload(payload: bytes) -> None:
        try:
            ack = AckMessage.from_json(payload)
        except CommandDecodeError:
            return
        if ack.seq in sent and ack.seq not in done:
            done[ack.seq] = loop.now_us()

    if transport == "pubsub":
        broker = Broker(loop, cfg.rto_ms, cfg.max_attempts)
        arm_client = Client(loop, "arm", cfg.rto_ms, cfg.max_attempts)
        arm_conn = broker.add_connection(lambda d: None)
        arm_client.attach(lambda d: loop.call_later(0, lambda: broker.on_datagram(arm_conn, d)))
        broker.replace_send(arm_conn, lambda d: loop.call_later(0, lambda: arm_client.on_datagram(d)))
        arm = ArmNode(loop, "arm1", arm_client, cfg.arm, ack_qos=0)
        arm.start()

        op = Client(loop, "op", cfg.rto_ms, cfg.max_attempts)
        op_conn = broker.add_connection(lambda d: None)
        up = Link(loop, profile, rng_up,
                  lambda d: broker.on_datagram(op_conn, d), name="micro-up")
        down = Link(loop, profile, rng_down, op.on_datagram, name="micro-down")
        op.attach(up.send)
        broker.replace_send(op_conn, down.send)
        op.connect()
        op.subscribe(arm.ack_topic, 0, lambda _t, p: on_ack_payload(p))
        send_command = lambda cmd: op.publish(arm.cmd_topic, cmd.to_json(), qos=0)
    elif transport == "stream":
        op_end = StreamConn(loop, "micro", True, on_ack_payload,
                            cfg.rto_ms, cfg.max_attempts)
        arm_end = StreamConn(loop, "micro:accept", False, lambda d: None,
                             cfg.rto_ms, cfg.max_attempts)
        responder = _StreamArmResponder(loop, cfg.arm, arm_end.send)
        arm_end.on_message = responder.on_message
        up = Link(loop, profile, rng_up, arm_end.on_datagram, name="micro-up")
        down = Link(loop, profile, rng_down, op_end.on_datagram, name="micro-down")
        op_end.attach(up.send)
        arm_end.attach(down.send)
        op_end.start()
        send_command = lambda cmd: op_end.send(cmd.to_json())
    else:
        raise ScenarioError(f"unknown transport {transport!r}")

    _drive(loop, WARMUP_US, cfg.realtime)
    period_us = round(1e6 / cfg.command_rate_hz)

    def issue(i: int) -> None:
        seq = i + 1
        now = loop.now_us()
        sent[seq] = now
        send_command(_command_for(i, seq, now))

    for i in range(cfg.n):
        loop.call_at(WARMUP_US + i * period_us, lambda i=i: issue(i))
    _drive(loop, WARMUP_US + cfg.n * period_us + GRACE_US, cfg.realtime)
    return [LatencySample("control", sent[s], done[s], cfg.route, transport)
            for s in sorted(sent) if s in done]


@dataclass(frozen=True)
class ComparisonReport:
    route: str
    n: int
    seed: int
    pubsub: LatencyStats
    stream: LatencyStats

    @property
    def ordered(self) -> bool:
        return self.pubsub.mean_ms < self.stream.mean_ms

    @property
    def ok(self) -> bool:
        return (self.ordered and self.pubsub.jitter_class == "Low"
                and self.stream.jitter_class == "Medium")


def compare_transports(route: str = "constrained", n: int = 300, seed: int = 42,
                       cfg: ScenarioConfig | None = None) -> ComparisonReport:
    base = cfg or ScenarioConfig()
    scenario = replace(base, route=route, n=n, seed=seed)
    if n < 30:
        raise ScenarioError("n must be >= 30")
    pub = _micro_latencies(scenario, "pubsub")
    stream = _micro_latencies(scenario, "stream")
    if len(pub) < max(30, n // 2) or len(stream) < max(30, n // 2):
        raise ScenarioError("too few completed samples in transport comparison")
    return ComparisonReport(route, n, seed,
                            stats_from_samples(pub), stats_from_samples(stream))


# -- grasp campaign ------------------------------------------------------------

@dataclass(frozen=True)
class TrialResult:
    class_id: int
    outcome: GraspOutcome


@dataclass(frozen=True)
class CampaignReport:
    route: str
    n_trials: int
    seed: int
    successes: int
    per_class: tuple[tuple[str, int, int], ...]  # (name, trials, successes)

    @property
    def success_rate(self) -> float:
        return self.successes / self.n_trials

    def class_rate(self, name: str) -> float:
        for cls_name, trials, wins in self.per_class:
            if cls_name == name and trials:
                return wins / trials
        return 0.0


class _GraspCampaign:
    """Sequential trials on one room: place, detect, steer, settle, grasp."""

    TRIAL_DEADLINE_US = 10_000_000
    POLL_US = 50_000

    def __init__(self, loop: EventLoop, room, cfg: ScenarioConfig, n_trials: int):
        self.loop = loop
        self.room = room
        self.cfg = cfg
        self.n_trials = n_trials
        self.rng_scene = derive_rng(cfg.seed, "grasp", "scene")
        self.rng_detect = derive_rng(cfg.seed, "grasp", "detect")
        self.rng_grasp = derive_rng(cfg.seed, "grasp", "outcome")
        self.results: list[TrialResult] = []
        self.n_classes = len(cfg.classes)
        self.noise = replace(cfg.noise, n_classes=self.n_classes)

    def start(self) -> None:
        self._begin_trial(0)

    def _begin_trial(self, index: int) -> None:
        if index >= self.n_trials:
            self.loop.stop()
            return
        target_class = index % self.n_classes
        scene = make_scene(self.rng_scene, n_objects=3,
                           n_classes=self.n_classes, target_class=target_class)
        self.room.place_object(scene)
        target = scene[0]
        detections = detect(scene, self.noise, self.rng_detect)
        candidates = [d for d in detections if d.class_id == target_class]
        if not candidates:
            outcome = grasp_attempt(self.room.arm.state, target, None,
                                    self.rng_grasp, self.cfg.grasp)
            self._finish_trial(index, target_class, outcome)
            return
        chosen = min(candidates,
                     key=lambda d: (d.box.cx - target.box.cx) ** 2
                     + (d.box.cy - target.box.cy) ** 2)
        # steer: yaw follows the detected center, fixed grasp posture;
        # sends spaced beyond the jitter scale so seq arbitration never
        # rejects a reordered command mid-trial
        plan = (("J1", max(0.0, min(180.0, chosen.box.cx * 180.0))),
                ("J2", 40.0), ("J3", 50.0), ("J4", 30.0))
        last_seq = 0
        for i, (joint, target_deg) in enumerate(plan):
            last_seq = self.room.next_seq()
            self.loop.call_later(i * 100_000, lambda s=last_seq, j=joint, t=target_deg:
                                 self.room.route_control("op1", ControlMessage(
                                     seq=s, joint=j, target_deg=t,
                                     issued_at_us=self.loop.now_us())))
        deadline = self.loop.now_us() + self.TRIAL_DEADLINE_US
        self.loop.call_later(self.POLL_US,
                             lambda: self._poll(index, target_class, target,
                                                chosen, last_seq, deadline))

    def _poll(self, index: int, target_class: int, target, chosen,
              last_seq: int, deadline: int) -> None:
        arm = self.room.arm
        # settled = every trial command processed by the gateway, none left
        # in its inbox, and the joints on target
        settled = (arm.last_seen_seq >= last_seq
                   and not arm.pending_issued_at
                   and converged(arm.state, self.cfg.grasp.convergence_tol_deg))
        if settled or self.loop.now_us() >= deadline:
            outcome = grasp_attempt(arm.state, target, chosen, self.rng_grasp,
                                    self.cfg.grasp, arm.oldest_pending_age_s())
            self._finish_trial(index, target_class, outcome)
            return
        self.loop.call_later(self.POLL_US,
                             lambda: self._poll(index, target_class, target,
                                                chosen, last_seq, deadline))

    def _finish_trial(self, index: int, target_class: int, outcome: GraspOutcome) -> None:
        self.results.append(TrialResult(target_class, outcome))
        self.loop.call_later(self.POLL_US, lambda: self._begin_trial(index + 1))


def run_grasp_campaign(route: str = "japan", n_trials: int = 300, seed: int = 42,
                       cfg: ScenarioConfig | None = None) -> CampaignReport:
    base = cfg or ScenarioConfig()
    scenario = replace(base, route=route, seed=seed)
    if n_trials < 30:
        raise ScenarioError("n_trials must be >= 30")
    loop = EventLoop()
    service = SessionService(loop, scenario)
    room = service.create_room("grasp", "arm1", route)
    room.join("op1")
    _drive(loop, WARMUP_US, scenario.realtime)
    campaign = _GraspCampaign(loop, room, scenario, n_trials)
    campaign.start()
    _drive(loop, WARMUP_US + n_trials * _GraspCampaign.TRIAL_DEADLINE_US,
           scenario.realtime)
    results = campaign.results
    if len(results) < n_trials:
        raise ScenarioError(f"campaign stalled: {len(results)}/{n_trials} trials")
    per_class = []
    for class_id, name in enumerate(scenario.classes):
        cls = [r for r in results if r.class_id == class_id]
        per_class.append((name, len(cls), sum(r.outcome.success for r in cls)))
    return CampaignReport(route, n_trials, seed,
                          sum(r.outcome.success for r in results), tuple(per_class))


# -- fallback continuity -------------------------------------------------------

@dataclass(frozen=True)
class FallbackReport:
    local_mean_ms: float
    outage_failures: int
    recovered_latencies_ms: tuple[float, ...]

    def ok(self, factor: float = 3.0) -> bool:
        bound = factor * self.local_mean_ms
        return (len(self.recovered_latencies_ms) >= 30
                and all(v <= bound for v in self.recovered_latencies_ms))


def run_fallback_continuity(seed: int = 42, n_after: int = 30,
                            cfg: ScenarioConfig | None = None) -> FallbackReport:
    """WAN goes fully dark, the room drops to offline-local, commands resume."""
    base = cfg or ScenarioConfig()
    scenario = replace(base, route="japan", seed=seed)
    local_mean = run_control_latency("local", "pubsub", 100, seed, base).mean_ms

    loop = EventLoop()
    service = SessionService(loop, scenario)
    room = service.create_room("fallback", "arm1", "japan")
    part = room.join("op1")
    _drive(loop, WARMUP_US, scenario.realtime)

    sent: dict[int, int] = {}
    done: dict[int, int] = {}
    part.ack_callbacks.append(
        lambda ack: done.setdefault(ack.seq, loop.now_us()) if ack.seq in sent else None)

    def issue(i: int) -> None:
        seq = room.next_seq()
        sent[seq] = loop.now_us()
        room.route_control("op1", _command_for(i, seq, loop.now_us()))

    # a few commands into the outage: these are allowed to fail
    outage_at = WARMUP_US
    loop.call_at(outage_at, lambda: room.set_wan_outage(True))
    for i in range(5):
        loop.call_at(outage_at + 100_000 + i * 500_000, lambda i=i: issue(i))
    switch_at = outage_at + 4_000_000
    loop.call_at(switch_at, lambda: room.set_mode(MODE_OFFLINE))
    outage_seqs = set(range(1, 6))

    recover_start = switch_at + 1_000_000
    period_us = round(1e6 / scenario.command_rate_hz)
    for i in range(n_after):
        loop.call_at(recover_start + i * period_us, lambda i=i: issue(100 + i))
    _drive(loop, recover_start + n_after * period_us + GRACE_US, scenario.realtime)

    recovered = [(done[s] - sent[s]) / 1000.0
                 for s in sorted(sent) if s in done and s not in outage_seqs]
    failures = sum(1 for s in outage_seqs if s not in done)
    return FallbackReport(local_mean, failures, tuple(recovered))
