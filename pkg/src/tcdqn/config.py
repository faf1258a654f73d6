"""Run configuration: nested dataclasses loaded from a YAML file.

Every field has a default. Unknown keys and ill-typed values are rejected
with the dotted path of the offending field.
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .agent import TOGGLES, AgentConfig
from .neural import Support
from .reward import RewardParams
from .sim import TRAFFIC_PRESETS, ConfigurationError, FlowModel, IntersectionSpec, SignalTimings, archetype


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class EnvConfig:
    archetype: str = "case3"
    # preset name, [l, h] for every lane, or one [l, h] per lane
    traffic: Any = "normal"
    episode_length: int = 120
    count_scale: float = 20.0
    sensor_range: float = 40.0
    speed_limit: float = 40.0 / 3.6


@dataclass
class ReplayConfig:
    capacity: int = 2 ** 15
    alpha: float = 0.6
    beta0: float = 0.4
    beta_increment: float = 0.001
    eps: float = 0.01


@dataclass
class BaselineConfig:
    ft_plan: Any = None  # [[phase, green], ...]; None = proportional default
    ft_windows: tuple = (1, 2, 3, 4)
    sotl_threshold: int = 5
    sotl_hold: int = 10


@dataclass
class EvalConfig:
    seeds: int = 5
    episodes: int = 20


@dataclass
class RunConfig:
    seed: int = 0
    episodes: int = 2000
    out_dir: str = "runs/default"
    checkpoint_every: int = 500
    smoothing: float = 0.99
    record_wallclock: bool = False
    env: EnvConfig = field(default_factory=EnvConfig)
    timings: SignalTimings = field(default_factory=SignalTimings)
    reward: RewardParams = field(default_factory=RewardParams)
    agent: AgentConfig = field(default_factory=AgentConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    # -- derived objects -----------------------------------------------------

    def intersection(self) -> IntersectionSpec:
        spec = archetype(self.env.archetype)
        return dataclasses.replace(spec, sensor_range=self.env.sensor_range, speed_limit=self.env.speed_limit)

    def flow(self) -> FlowModel:
        spec = self.intersection()
        traffic = self.env.traffic
        if isinstance(traffic, str):
            return FlowModel.uniform(spec, TRAFFIC_PRESETS[traffic], self.env.episode_length)
        if len(traffic) == 2 and not isinstance(traffic[0], (list, tuple)):
            return FlowModel.uniform(spec, tuple(traffic), self.env.episode_length)
        return FlowModel(tuple(tuple(b) for b in traffic), self.env.episode_length)

    def to_dict(self) -> dict:
        return _to_plain(self)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(x) for x in obj]
    return obj


_NESTED = {
    "env": EnvConfig, "timings": SignalTimings, "reward": RewardParams, "agent": AgentConfig,
    "replay": ReplayConfig, "baselines": BaselineConfig, "eval": EvalConfig, "support": Support,
}


def _coerce(path: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(value)
    return value


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    defaults = cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    names = set(fields)
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(sub, "unknown field")
        default = getattr(defaults, key)
        if key in _NESTED and dataclasses.is_dataclass(default):
            kwargs[key] = _build(_NESTED[key], value, sub)
        elif fields[key].type == "Any":
            kwargs[key] = value
        else:
            kwargs[key] = _coerce(sub, value, default)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path or "config", str(exc)) from None


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.episodes < 1:
        raise ConfigError("episodes", "must be >= 1")
    if cfg.checkpoint_every < 0:
        raise ConfigError("checkpoint_every", "must be >= 0")
    if not 0.0 <= cfg.smoothing < 1.0:
        raise ConfigError("smoothing", "must lie in [0, 1)")
    cap = cfg.replay.capacity
    if cap < 1 or cap & (cap - 1):
        raise ConfigError("replay.capacity", "must be a power of two")
    if cfg.env.count_scale <= 0:
        raise ConfigError("env.count_scale", "must be positive")
    traffic = cfg.env.traffic
    if isinstance(traffic, str) and traffic not in TRAFFIC_PRESETS:
        raise ConfigError("env.traffic", f"unknown preset {traffic!r}; expected one of {sorted(TRAFFIC_PRESETS)}")
    try:
        spec = cfg.intersection()
    except ConfigurationError as exc:
        raise ConfigError("env", str(exc)) from None
    try:
        flow = cfg.flow()
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise ConfigError("env.traffic", str(exc)) from None
    if len(flow.bounds) != len(spec.lanes):
        raise ConfigError("env.traffic", f"needs {len(spec.lanes)} lane bounds, got {len(flow.bounds)}")
    if cfg.baselines.ft_plan is not None:
        from .baselines import FixedTimePlan

        try:
            plan = FixedTimePlan(tuple(tuple(e) for e in cfg.baselines.ft_plan), cfg.timings.transition)
            plan.validate(spec.action_count, cfg.timings.green_min)
        except (ValueError, TypeError) as exc:
            raise ConfigError("baselines.ft_plan", str(exc)) from None
    if cfg.baselines.sotl_threshold < 1:
        raise ConfigError("baselines.sotl_threshold", "must be >= 1")
    if cfg.baselines.sotl_hold < cfg.timings.green_min:
        raise ConfigError("baselines.sotl_hold", "must be >= timings.green_min")
    if cfg.eval.seeds < 1 or cfg.eval.episodes < 1:
        raise ConfigError("eval", "seeds and episodes must be >= 1")
    return cfg


def config_from_dict(data: dict | None) -> RunConfig:
    return validate(_build(RunConfig, data, ""))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def with_overrides(cfg: RunConfig, *, seed=None, episodes=None, out_dir=None, toggles=None) -> RunConfig:
    """Copy of ``cfg`` with CLI-style overrides; ``toggles`` maps toggle name -> bool."""
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg.seed = int(seed)
    if episodes is not None:
        cfg.episodes = int(episodes)
    if out_dir is not None:
        cfg.out_dir = str(out_dir)
    for name, on in (toggles or {}).items():
        if name not in TOGGLES:
            raise ConfigError(f"toggle.{name}", f"unknown toggle; expected one of {list(TOGGLES)}")
        setattr(cfg.agent, f"use_{name}", bool(on))
    return validate(cfg)


def parse_toggle(text: str) -> tuple[str, bool]:
    """Parse ``name=off`` / ``name=on``."""
    name, _, state = text.partition("=")
    state = state.strip().lower()
    if state not in ("on", "off", "true", "false", "1", "0"):
        raise ConfigError(f"toggle.{name}", f"expected on/off, got {state!r}")
    return name.strip(), state in ("on", "true", "1")


def full_scale(cfg: RunConfig | None = None) -> RunConfig:
    """Full-size settings: 2^20 replay, 10k-frame target period, 400-frame episodes."""
    cfg = copy.deepcopy(cfg or RunConfig())
    cfg.replay.capacity = 2 ** 20
    cfg.agent.target_period = 10_000
    cfg.env.episode_length = 400
    return validate(cfg)
