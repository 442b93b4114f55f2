"""Seedable network emulation: per-link delay, jitter, loss, and size penalty.

Every control and video message in the testbed crosses a `Link`, which
applies one `NetProfile` draw per datagram. Jitter is half-normal |N(0, s)|
so delays stay non-negative with a single shape parameter. Route defaults
are calibrated so a command round trip (2 traversals + 20 ms node
processing) lands on the latency matrix targets; see `bench`.
"""

from __future__ import annotations

import configparser
import hashlib
import random
from dataclasses import dataclass, replace
from typing import Callable

from .clock import EventLoop

ROUTES = ("local", "hongkong", "japan", "belgium")


def derive_seed(master: int, *labels: object) -> int:
    """Stable sub-seed for a named rng stream (independent of PYTHONHASHSEED)."""
    key = ":".join([str(master)] + [str(x) for x in labels])
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(master: int, *labels: object) -> random.Random:
    return random.Random(derive_seed(master, *labels))


@dataclass(frozen=True)
class NetProfile:
    name: str
    base_owd_ms: float = 0.0
    jitter_sigma_ms: float = 0.0
    loss_rate: float = 0.0
    bandwidth_penalty_ms_per_kb: float = 0.0

    def __post_init__(self):
        if not (self.base_owd_ms >= 0 and self.jitter_sigma_ms >= 0):
            raise ValueError(f"negative delay fields in profile {self.name!r}")
        if not 0.0 <= self.loss_rate < 1.0:
            raise ValueError(f"loss_rate must be in [0,1): {self.loss_rate}")
        for v in (self.base_owd_ms, self.jitter_sigma_ms, self.loss_rate,
                  self.bandwidth_penalty_ms_per_kb):
            if v != v or v in (float("inf"), float("-inf")):
                raise ValueError(f"non-finite field in profile {self.name!r}")

    def video_variant(self, penalty_ms_per_kb: float = 5.0) -> "NetProfile":
        return replace(self, name=self.name + "-video",
                       bandwidth_penalty_ms_per_kb=penalty_ms_per_kb)


@dataclass(frozen=True)
class ScheduledDelivery:
    deliver_at: int  # monotonic us
    dropped: bool
    payload: bytes


def apply(profile: NetProfile, payload_len: int, now_us: int,
          rng: random.Random, payload: bytes = b"") -> ScheduledDelivery:
    """One emulation draw: loss first, then delay. Deterministic per rng stream."""
    if profile.loss_rate > 0.0 and rng.random() < profile.loss_rate:
        return ScheduledDelivery(now_us, True, payload)
    delay_ms = profile.base_owd_ms
    if profile.jitter_sigma_ms > 0.0:
        delay_ms += abs(rng.gauss(0.0, profile.jitter_sigma_ms))
    delay_ms += (payload_len / 1024.0) * profile.bandwidth_penalty_ms_per_kb
    return ScheduledDelivery(now_us + round(delay_ms * 1000.0), False, payload)


# Control-plane calibration: round trip ~= 2 x base_owd + 20 ms processing.
DEFAULT_PROFILES: dict[str, NetProfile] = {
    "local": NetProfile("local", 90.0, 10.0, 0.001),
    "hongkong": NetProfile("hongkong", 140.0, 15.0, 0.005),
    "japan": NetProfile("japan", 240.0, 25.0, 0.01),
    "belgium": NetProfile("belgium", 340.0, 30.0, 0.01),
    # server <-> arm leg inside the cloud path
    "lan": NetProfile("lan", 2.0, 0.5, 0.0),
    # transport-comparison scenario
    "constrained": NetProfile("constrained", 50.0, 10.0, 0.01),
}

_PROFILE_FIELDS = ("base_owd_ms", "jitter_sigma_ms", "loss_rate",
                   "bandwidth_penalty_ms_per_kb")


class ProfileError(ValueError):
    pass


def profile_for_route(route: str,
                      overrides: dict[str, NetProfile] | None = None) -> NetProfile:
    table = dict(DEFAULT_PROFILES)
    if overrides:
        table.update(overrides)
    key = route.strip().lower().replace("_", "").replace(" ", "")
    if key not in table:
        raise ProfileError(f"unknown route {route!r}; known: {sorted(table)}")
    return table[key]


def load_profiles(path: str) -> dict[str, NetProfile]:
    """Profile overrides from an INI file, one section per profile name."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ProfileError(f"profile file not found: {path}")
    out: dict[str, NetProfile] = {}
    for section in parser.sections():
        fields = {"name": section.lower()}
        for key, value in parser.items(section):
            if key not in _PROFILE_FIELDS:
                raise ProfileError(f"unknown key {key!r} in profile [{section}]")
            try:
                fields[key] = float(value)
            except ValueError as exc:
                raise ProfileError(f"bad value for {key} in [{section}]: {value!r}") from exc
        try:
            out[section.lower()] = NetProfile(**fields)
        except ValueError as exc:
            raise ProfileError(str(exc)) from exc
    return out


class Link:
    """Unidirectional datagram pipe through one profile.

    Datagrams may reorder naturally when jitter draws overlap; a link in the
    `down` state drops everything (WAN outage, distinct from loss_rate which
    must stay < 1).
    """

    def __init__(self, loop: EventLoop, profile: NetProfile, rng: random.Random,
                 sink: Callable[[bytes], None], name: str = ""):
        self.loop = loop
        self.profile = profile
        self.rng = rng
        self.sink = sink
        self.name = name or profile.name
        self.down = False
        self.sent = 0
        self.dropped = 0
        self.delivered = 0

    def send(self, payload: bytes) -> ScheduledDelivery:
        self.sent += 1
        if self.down:
            self.dropped += 1
            return ScheduledDelivery(self.loop.now_us(), True, payload)
        sched = apply(self.profile, len(payload), self.loop.now_us(), self.rng, payload)
        if sched.dropped:
            self.dropped += 1
        else:
            self.loop.call_at(sched.deliver_at, lambda p=payload: self._deliver(p))
        return sched

    def _deliver(self, payload: bytes) -> None:
        self.delivered += 1
        self.sink(payload)
