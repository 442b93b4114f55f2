"""Simulated two-tier actuator: command gateway + slew-limited motion.

The gateway validates and acks joint commands (duplicate and stale rejection
included); the motion controller advances each joint toward its target at a
bounded rate on a fixed tick. Forward kinematics treats the arm as a planar
shoulder/elbow/wrist chain rotated about the base yaw, which keeps the 0.30 m
reach envelope exact.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, replace

from .clock import EventLoop
from .msgbus.client import Client

log = logging.getLogger("teleosim.actuator")

JOINTS = ("J1", "J2", "J3", "J4", "J5", "J6")
GRIP = "GRIP"

ANGLE_MIN = 0.0
ANGLE_MAX = 180.0

# link lengths (m): shoulder->elbow, elbow->wrist, wrist->tip; base column height
L1, L2, L3 = 0.12, 0.12, 0.06
Z_BASE = 0.06
REACH_M = L1 + L2 + L3


class CommandDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class ControlMessage:
    seq: int
    joint: str
    target_deg: float
    issued_at_us: int
    version: int = 1

    def to_json(self) -> bytes:
        return json.dumps(
            {"v": self.version, "seq": self.seq, "joint": self.joint,
             "target_deg": float(self.target_deg), "issued_at_us": self.issued_at_us},
            separators=(",", ":")).encode()

    @classmethod
    def from_json(cls, payload: bytes) -> "ControlMessage":
        try:
            obj = json.loads(payload.decode("utf-8"))
            return cls(seq=int(obj["seq"]), joint=str(obj["joint"]),
                       target_deg=float(obj["target_deg"]),
                       issued_at_us=int(obj["issued_at_us"]), version=int(obj["v"]))
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
            raise CommandDecodeError(f"bad control payload: {exc}") from exc


@dataclass(frozen=True)
class ArmState:
    angles_deg: tuple[float, ...] = (0.0,) * 6
    gripper_closed: bool = False
    targets_deg: tuple[float, ...] = (0.0,) * 6
    updated_at: int = 0


@dataclass(frozen=True)
class AckMessage:
    seq: int
    applied: bool
    acked_at_us: int
    state: ArmState
    error: str | None = None

    def to_json(self) -> bytes:
        obj = {"seq": self.seq, "applied": self.applied, "acked_at_us": self.acked_at_us,
               "angles_deg": [round(a, 6) for a in self.state.angles_deg],
               "grip": self.state.gripper_closed}
        if self.error is not None:
            obj["error"] = self.error
        return json.dumps(obj, separators=(",", ":")).encode()

    @classmethod
    def from_json(cls, payload: bytes) -> "AckMessage":
        try:
            obj = json.loads(payload.decode("utf-8"))
            state = ArmState(angles_deg=tuple(float(a) for a in obj["angles_deg"]),
                             gripper_closed=bool(obj["grip"]),
                             targets_deg=tuple(float(a) for a in obj["angles_deg"]),
                             updated_at=int(obj["acked_at_us"]))
            return cls(seq=int(obj["seq"]), applied=bool(obj["applied"]),
                       acked_at_us=int(obj["acked_at_us"]), state=state,
                       error=obj.get("error"))
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
            raise CommandDecodeError(f"bad ack payload: {exc}") from exc


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class ArmConfig:
    slew_rate_deg_s: float = 300.0
    tick_ms: int = 10
    processing_ms: float = 20.0
    staleness_timeout_s: float = 2.0


def clamp_angle(deg: float) -> float:
    return min(ANGLE_MAX, max(ANGLE_MIN, deg))


def handle_command(cmd: ControlMessage, state: ArmState, last_seen_seq: int,
                   now_us: int, staleness_timeout_s: float = 2.0,
                   ) -> tuple[ArmState, AckMessage, int]:
    """Gateway step: validate, dedup, clamp, set target, ack.

    Duplicate seqs (QoS1 redelivery) and out-of-date commands leave the state
    untouched and ack with applied=False.
    """
    if cmd.seq <= last_seen_seq:
        return state, AckMessage(cmd.seq, False, now_us, state, "stale-seq"), last_seen_seq
    if now_us - cmd.issued_at_us > staleness_timeout_s * 1e6:
        return state, AckMessage(cmd.seq, False, now_us, state, "stale-timeout"), cmd.seq
    if cmd.joint == GRIP:
        new_state = replace(state, gripper_closed=cmd.target_deg >= 90.0, updated_at=now_us)
        return new_state, AckMessage(cmd.seq, True, now_us, new_state), cmd.seq
    if cmd.joint not in JOINTS:
        return state, AckMessage(cmd.seq, False, now_us, state, "unknown-joint"), cmd.seq
    idx = JOINTS.index(cmd.joint)
    targets = list(state.targets_deg)
    targets[idx] = clamp_angle(cmd.target_deg)
    new_state = replace(state, targets_deg=tuple(targets), updated_at=now_us)
    return new_state, AckMessage(cmd.seq, True, now_us, new_state), cmd.seq


def step(state: ArmState, dt: float) -> ArmState:
    """Advance every joint toward its target by at most slew_rate * dt."""
    return step_with_rate(state, dt, ArmConfig().slew_rate_deg_s)


def step_with_rate(state: ArmState, dt: float, slew_rate_deg_s: float) -> ArmState:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    max_move = slew_rate_deg_s * dt
    angles = []
    for angle, target in zip(state.angles_deg, state.targets_deg):
        delta = target - angle
        if abs(delta) <= max_move:
            angles.append(target)
        else:
            angles.append(angle + math.copysign(max_move, delta))
    return replace(state, angles_deg=tuple(angles),
                   updated_at=state.updated_at + round(dt * 1e6))


def forward_kinematics(angles_deg: tuple[float, ...]) -> Pose:
    """End-effector position; J5/J6 orient the wrist and do not move it.

    Zero-offset convention: all angles 0 means fully extended along +x at
    z = Z_BASE; J2/J3/J4 are relative pitches, J1 the base yaw.
    """
    yaw = math.radians(angles_deg[0])
    p2 = math.radians(angles_deg[1])
    p3 = p2 + math.radians(angles_deg[2])
    p4 = p3 + math.radians(angles_deg[3])
    radial = L1 * math.cos(p2) + L2 * math.cos(p3) + L3 * math.cos(p4)
    dz = L1 * math.sin(p2) + L2 * math.sin(p3) + L3 * math.sin(p4)
    return Pose(radial * math.cos(yaw), radial * math.sin(yaw), Z_BASE + dz)


def converged(state: ArmState, tol_deg: float = 0.5) -> bool:
    return all(abs(a - t) < tol_deg
               for a, t in zip(state.angles_deg, state.targets_deg))


@dataclass(frozen=True)
class GraspConfig:
    tau_align: float = 12.0 / 640.0   # per-axis center tolerance, frame fractions
    convergence_tol_deg: float = 0.5
    staleness_timeout_s: float = 2.0


@dataclass(frozen=True)
class GraspOutcome:
    success: bool
    center_error_norm: float
    reason: str = ""


def grasp_attempt(state: ArmState, target, detection, rng: random.Random,
                  cfg: GraspConfig = GraspConfig(),
                  oldest_pending_age_s: float = 0.0) -> GraspOutcome:
    """Judge one pick: detector-guided alignment + settled arm.

    `target` is the ground-truth scene object, `detection` the (noisy)
    detector output steering the operator. All randomness enters upstream
    through the detection noise; `rng` is accepted for failure-mode
    extensions and drawn from only if those are enabled.
    """
    if state.gripper_closed:
        raise ValueError("grasp_attempt requires the gripper open at start")
    if detection is None or detection.class_id != target.class_id:
        return GraspOutcome(False, 1.0, "no-detection")
    if oldest_pending_age_s > cfg.staleness_timeout_s:
        return GraspOutcome(False, 1.0, "stale-command-pending")
    if not converged(state, cfg.convergence_tol_deg):
        return GraspOutcome(False, 1.0, "not-converged")
    dx = abs(detection.box.cx - target.box.cx)
    dy = abs(detection.box.cy - target.box.cy)
    err = max(dx, dy)
    if dx <= cfg.tau_align and dy <= cfg.tau_align:
        return GraspOutcome(True, err)
    return GraspOutcome(False, err, "misaligned")


class ArmNode:
    """Bus-connected actuator: ordered command inbox, fixed-tick motion."""

    def __init__(self, loop: EventLoop, arm_id: str, client: Client,
                 cfg: ArmConfig = ArmConfig(), ack_qos: int = 1):
        self.loop = loop
        self.arm_id = arm_id
        self.client = client
        self.cfg = cfg
        self.ack_qos = ack_qos
        self.state = ArmState(updated_at=loop.now_us())
        self.last_seen_seq = 0
        self.decode_errors = 0
        self.pending_issued_at: list[int] = []
        self._ticking = False

    @property
    def cmd_topic(self) -> str:
        return f"arm/{self.arm_id}/cmd"

    @property
    def ack_topic(self) -> str:
        return f"arm/{self.arm_id}/ack"

    def start(self) -> None:
        self.client.connect()
        self.client.subscribe(self.cmd_topic, 1, self._on_command)
        if not self._ticking:
            self._ticking = True
            self.loop.call_later(self.cfg.tick_ms * 1000, self._tick)

    def _tick(self) -> None:
        self.state = step_with_rate(self.state, self.cfg.tick_ms / 1000.0,
                                    self.cfg.slew_rate_deg_s)
        self.state = replace(self.state, updated_at=self.loop.now_us())
        self.loop.call_later(self.cfg.tick_ms * 1000, self._tick)

    def _on_command(self, topic: str, payload: bytes) -> None:
        try:
            cmd = ControlMessage.from_json(payload)
        except CommandDecodeError as exc:
            self.decode_errors += 1
            log.warning("arm %s: %s", self.arm_id, exc)
            return
        self.pending_issued_at.append(cmd.issued_at_us)
        self.loop.call_later(round(self.cfg.processing_ms * 1000),
                             lambda: self._apply(cmd))

    def _apply(self, cmd: ControlMessage) -> None:
        self.pending_issued_at.remove(cmd.issued_at_us)
        self.state, ack, self.last_seen_seq = handle_command(
            cmd, self.state, self.last_seen_seq, self.loop.now_us(),
            self.cfg.staleness_timeout_s)
        self.client.publish(self.ack_topic, ack.to_json(), qos=self.ack_qos)

    def oldest_pending_age_s(self) -> float:
        if not self.pending_issued_at:
            return 0.0
        return (self.loop.now_us() - min(self.pending_issued_at)) / 1e6
