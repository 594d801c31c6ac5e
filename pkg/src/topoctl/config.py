"""Simulation parameters and the flat ``key = value`` configuration format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Mapping, Optional

ENV_PREFIX = "TOPOCTL_"
MODES = ("incremental", "batch", "both")


class ConfigError(ValueError):
    pass


@dataclass
class EnergyConfig:
    source_initial: float = 130.0
    base_initial: float = 100000.0
    # joules per 1024-byte message sent over a full-radius hop; scales with (d / tx_radius)^2
    per_message: float = 0.05


@dataclass
class MobilityConfig:
    alpha: float = 0.75
    mean_speed: float = 1.0
    speed_std: float = 0.25
    direction_std: float = 0.5
    time_step: float = 60.0


@dataclass
class SimConfig:
    node_count: int = 100
    world_side: float = 750.0
    tx_radius: float = 131.0
    k: float = 1.41
    tc_interval: float = 600.0
    sim_duration: float = 72000.0
    hesitation: float = 0.99
    seed: int = 0
    mode: str = "both"
    message_size: int = 1024
    send_interval: float = 10.0
    link_order: str = "weight"
    routing: str = "weight"
    weight_threshold: float = 0.0
    check: bool = True
    record_timing: bool = True
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)

    @property
    def tc_runs(self) -> int:
        """Recorded TC runs; the first run classifies the initial topology and is not recorded."""
        return round(self.sim_duration / self.tc_interval) - 1

    def validate(self) -> "SimConfig":
        positive = {
            "node_count": self.node_count, "world_side": self.world_side,
            "tx_radius": self.tx_radius, "k": self.k, "tc_interval": self.tc_interval,
            "sim_duration": self.sim_duration, "message_size": self.message_size,
            "send_interval": self.send_interval, "mobility.time_step": self.mobility.time_step,
            "energy.source_initial": self.energy.source_initial,
            "energy.base_initial": self.energy.base_initial,
        }
        for key, v in positive.items():
            if not v > 0:
                raise ConfigError(f"{key} must be positive, got {v!r}")
        for key in ("energy.per_message", "weight_threshold", "mobility.mean_speed",
                    "mobility.speed_std", "mobility.direction_std"):
            if get_key(self, key) < 0:
                raise ConfigError(f"{key} must not be negative")
        if not 0 <= self.hesitation <= 1:
            raise ConfigError(f"hesitation must lie in [0, 1], got {self.hesitation!r}")
        if not 0 <= self.mobility.alpha <= 1:
            raise ConfigError(f"mobility.alpha must lie in [0, 1], got {self.mobility.alpha!r}")
        ratio = self.sim_duration / self.tc_interval
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 2:
            raise ConfigError("tc_interval must divide sim_duration at least twice")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.link_order not in ("weight", "id", "random"):
            raise ConfigError("link_order must be weight, id or random")
        if self.routing not in ("weight", "hops"):
            raise ConfigError("routing must be weight or hops")
        return self


def _fields(obj, prefix: str = "") -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            out.update(_fields(value, f"{prefix}{f.name}."))
        else:
            out[prefix + f.name] = f.type if isinstance(f.type, str) else f.type.__name__
    return out


KEYS = _fields(SimConfig())


def get_key(cfg: SimConfig, key: str):
    obj = cfg
    for part in key.split("."):
        obj = getattr(obj, part)
    return obj


def _convert(key: str, raw: str):
    kind = KEYS[key]
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None


def set_key(cfg: SimConfig, key: str, value) -> None:
    if key not in KEYS:
        raise ConfigError(f"unknown configuration key {key!r}")
    if isinstance(value, str):
        value = _convert(key, value)
    *path, last = key.split(".")
    obj = cfg
    for part in path:
        obj = getattr(obj, part)
    setattr(obj, last, value)


def parse_config(text: str, cfg: Optional[SimConfig] = None) -> SimConfig:
    cfg = cfg or SimConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        set_key(cfg, key.strip(), value.strip())
    return cfg


def load_config(path: str, cfg: Optional[SimConfig] = None) -> SimConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, cfg)


def env_overrides(cfg: SimConfig, environ: Optional[Mapping[str, str]] = None) -> SimConfig:
    """Apply ``TOPOCTL_<KEY>`` variables; dots in keys become double underscores."""
    environ = os.environ if environ is None else environ
    for key in KEYS:
        name = ENV_PREFIX + key.replace(".", "__").upper()
        if name in environ:
            set_key(cfg, key, environ[name])
    return cfg


def dumps_config(cfg: SimConfig) -> str:
    return "".join(f"{key} = {get_key(cfg, key)}\n" for key in KEYS)


def as_dict(cfg: SimConfig) -> dict:
    return {key: get_key(cfg, key) for key in KEYS}
