"""Scenario configuration: one INI file format for profiles and runs.

Flags override file values; file values override dataclass defaults.
Unknown keys are rejected with the offending section and key named.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .actuator import ArmConfig, GraspConfig
from .netem import DEFAULT_PROFILES, NetProfile, ProfileError, load_profiles
from .perception import DEFAULT_CLASS_NAMES, NoiseModel

# Media pipeline (capture + encode + buffering) per route, calibrated so the
# plain video path lands on its latency target; inference and render are
# separate explicit terms.
MEDIA_PIPELINE_MS = {
    "local": 378.0,
    "hongkong": 423.0,
    "japan": 713.0,
    "belgium": 509.0,
    "constrained": 378.0,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    route: str = "local"
    transport: str = "pubsub"  # control-plane transport: pubsub | stream
    seed: int = 42
    n: int = 100
    command_rate_hz: float = 2.0
    command_qos: int = 1
    fps: float = 5.0
    overlay: bool = True
    inference_ms: int = 200
    render_ms: float = 20.0
    rto_ms: int = 200
    max_attempts: int = 10
    video_penalty_ms_per_kb: float = 5.0
    media_pipeline_ms: float | None = None  # None -> per-route default
    grasp_trials: int = 300
    out_dir: str = "reports"
    realtime: bool = False
    classes: tuple[str, ...] = DEFAULT_CLASS_NAMES
    arm: ArmConfig = field(default_factory=ArmConfig)
    grasp: GraspConfig = field(default_factory=GraspConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    profiles: dict[str, NetProfile] = field(default_factory=dict)

    def profile(self, name: str | None = None) -> NetProfile:
        from .netem import profile_for_route
        return profile_for_route(name or self.route, self.profiles)

    def pipeline_ms(self) -> float:
        if self.media_pipeline_ms is not None:
            return self.media_pipeline_ms
        return MEDIA_PIPELINE_MS.get(self.route, MEDIA_PIPELINE_MS["local"])


_SCALAR_FIELDS = {
    "route": str, "transport": str, "seed": int, "n": int,
    "command_rate_hz": float, "command_qos": int, "fps": float,
    "overlay": bool, "inference_ms": int, "render_ms": float,
    "rto_ms": int, "max_attempts": int, "video_penalty_ms_per_kb": float,
    "media_pipeline_ms": float, "grasp_trials": int, "out_dir": str,
    "realtime": bool, "classes": "classes",
}

_NESTED_SECTIONS = {
    "arm": (ArmConfig, "arm"),
    "grasp": (GraspConfig, "grasp"),
    "noise": (NoiseModel, "noise"),
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _coerce(name: str, kind, raw: str):
    try:
        if kind is bool:
            return _parse_bool(raw)
        if kind == "classes":
            names = tuple(part.strip() for part in raw.split(",") if part.strip())
            if not names:
                raise ConfigError("class list is empty")
            return names
        return kind(raw)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r} ({exc})") from exc


def load_scenario(path: str | None, overrides: dict | None = None) -> ScenarioConfig:
    """Build a ScenarioConfig from an optional INI file plus flag overrides."""
    values: dict = {}
    nested: dict[str, dict] = {}
    profiles: dict[str, NetProfile] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section == "scenario":
                for key, raw in parser.items(section):
                    if key not in _SCALAR_FIELDS:
                        raise ConfigError(f"unknown key {key!r} in [scenario]")
                    values[key] = _coerce(key, _SCALAR_FIELDS[key], raw)
            elif section in _NESTED_SECTIONS:
                cls, name = _NESTED_SECTIONS[section]
                legal = {f.name: f.type for f in dataclasses.fields(cls)}
                bucket = {}
                for key, raw in parser.items(section):
                    if key not in legal:
                        raise ConfigError(f"unknown key {key!r} in [{name}]")
                    default = getattr(cls(), key)
                    kind = type(default) if default is not None else float
                    bucket[key] = _coerce(f"{name}.{key}", kind, raw)
                nested[name] = bucket
            elif section.startswith("profile:"):
                pname = section.split(":", 1)[1].strip().lower()
                fields = {"name": pname}
                for key, raw in parser.items(section):
                    if key not in ("base_owd_ms", "jitter_sigma_ms", "loss_rate",
                                   "bandwidth_penalty_ms_per_kb"):
                        raise ConfigError(f"unknown key {key!r} in [{section}]")
                    fields[key] = _coerce(key, float, raw)
                try:
                    profiles[pname] = NetProfile(**fields)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(str(exc)) from exc
            else:
                raise ConfigError(f"unknown section [{section}]")
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "profiles":
                profiles.update(value)
                continue
            if key not in _SCALAR_FIELDS:
                raise ConfigError(f"unknown override {key!r}")
            values[key] = value
    kwargs = dict(values)
    for name, bucket in nested.items():
        cls, _ = _NESTED_SECTIONS[name]
        kwargs[name] = cls(**bucket)
    if profiles:
        kwargs["profiles"] = profiles
    try:
        cfg = ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.route not in set(DEFAULT_PROFILES) | set(cfg.profiles):
        raise ConfigError(f"unknown route {cfg.route!r}")
    if cfg.transport not in ("pubsub", "stream"):
        raise ConfigError(f"unknown transport {cfg.transport!r}")
    if cfg.n < 1:
        raise ConfigError("n must be positive")
    return cfg


def load_profile_file(path: str) -> dict[str, NetProfile]:
    try:
        return load_profiles(path)
    except ProfileError as exc:
        raise ConfigError(str(exc)) from exc
