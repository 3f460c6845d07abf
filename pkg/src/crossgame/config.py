"""Scenario files: YAML with a fixed schema, validated with field names and line numbers.

Schema (every section optional except ``initial``)::

    scenario_id: case1
    dt: 0.8            # s
    horizon: 40.0      # s
    payoff_scale: null # null = per-step utility bound
    initial:           # gap, v_av and v_ped are required
      gap: 46.309      # vehicle front to crossing line, m
      v_av: 9.348
      a_av: -0.11
      ped_offset: 2.564  # pedestrian start, distance back from the near curb, m
      v_ped: 0.03
    geometry: {vehicle_length, vehicle_width, lane_width, conflict_x, ped_radius}
    agents: {k_max, lambda_init, lambda_self, lambda_max, av_level_belief,
             ped_level_belief, ped_updates_beliefs, mix_level0}
    # av_level_belief: the AV's initial belief over pedestrian levels 0..k_max-1
    # (null = uniform); ped_level_belief likewise for the pedestrian
    weights: {w_collision, w_speed_dev, w_accel, w_progress, w_wait, v_des}
    search: {iterations, max_depth, c_uct, gamma, root_trees, opponent_argmax}
    sampling: {n_samples, sigma, comfort_cap, gap_threshold, history}
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .env import Geometry
from .mcts import SearchConfig
from .payoff import UtilityWeights



class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialConditions:
    gap: float
    v_av: float
    v_ped: float
    a_av: float = 0.0
    ped_offset: float = 2.564

    def __post_init__(self):
        for name in ("gap", "v_av", "v_ped", "a_av", "ped_offset"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.v_av < 0:
            raise ValueError("v_av must be >= 0")
        if self.v_ped < 0:
            raise ValueError("v_ped must be >= 0")
        if not -5.0 <= self.a_av <= 5.0:
            raise ValueError("a_av must lie in [-5, 5]")


@dataclass(frozen=True)
class AgentsConfig:
    k_max: int = 2
    lambda_init: float = 10.0
    lambda_self: float = 10.0
    lambda_max: float = 100.0
    av_level_belief: tuple[float, ...] | None = None
    ped_level_belief: tuple[float, ...] | None = None
    ped_updates_beliefs: bool = True
    mix_level0: bool = False

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if not 0 < self.lambda_init < self.lambda_max:
            raise ValueError("lambda_init must lie in (0, lambda_max)")
        if not self.lambda_self >= 0:
            raise ValueError("lambda_self must be >= 0")
        for name in ("av_level_belief", "ped_level_belief"):
            value = getattr(self, name)
            if value is None:
                continue
            b = tuple(float(u) for u in value)
            if len(b) != self.k_max or min(b) < 0 or abs(sum(b) - 1) > 1e-9:
                raise ValueError(f"{name} must be a simplex with k_max entries")
            object.__setattr__(self, name, b)


@dataclass(frozen=True)
class WeightsConfig:
    w_collision: float = 1000.0
    w_speed_dev: float = 1.0
    w_accel: float = 0.5
    w_progress: float = 1.0
    w_wait: float = 0.2
    v_des: float | None = None  # None = initial vehicle speed


@dataclass(frozen=True)
class SamplingConfig:
    n_samples: int = 6
    sigma: float = 0.5
    comfort_cap: float = 1.0
    gap_threshold: float = 2.0
    history: int = 5

    def __post_init__(self):
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.comfort_cap > 0:
            raise ValueError("comfort_cap must be > 0")
        if not self.gap_threshold >= 0:
            raise ValueError("gap_threshold must be >= 0")
        if self.history < 1:
            raise ValueError("history must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    initial: InitialConditions
    scenario_id: str = "scenario"
    dt: float = 0.8
    horizon: float = 40.0
    payoff_scale: float | None = None
    geometry: Geometry = field(default_factory=Geometry)
    agents: AgentsConfig = field(default_factory=AgentsConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be finite and > 0")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be finite and > 0")
        if self.payoff_scale is not None and not self.payoff_scale > 0:
            raise ValueError("payoff_scale must be > 0")

    @property
    def horizon_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def utility_weights(self) -> UtilityWeights:
        w = self.weights
        v_des = w.v_des if w.v_des is not None else self.initial.v_av
        return UtilityWeights(w.w_collision, w.w_speed_dev, w.w_accel, w.w_progress,
                              w.w_wait, v_des, self.horizon_steps)

    def payoff_scale_value(self) -> float:
        """Divisor applied to payoffs before the quantal response (default: per-step bound)."""
        if self.payoff_scale is not None:
            return self.payoff_scale
        return self.utility_weights().step_bound

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for name in ("av_level_belief", "ped_level_belief"):
            if d["agents"][name] is not None:
                d["agents"][name] = list(d["agents"][name])
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = {
    "initial": InitialConditions,
    "geometry": Geometry,
    "agents": AgentsConfig,
    "weights": WeightsConfig,
    "search": SearchConfig,
    "sampling": SamplingConfig,
}
_TOP = {"scenario_id": str, "dt": float, "horizon": float, "payoff_scale": float}


def _line_map(node, prefix="", out=None) -> dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}{key.value}"
            out[path] = key.start_mark.line + 1
            _line_map(value, path + ".", out)
    return out


def _coerce(value, typ, path, line):
    if value is None:
        return None
    origin = typ if isinstance(typ, type) else None
    try:
        if origin is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if origin is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if origin is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if origin is str:
            return str(value)
    except TypeError:
        raise ConfigError(f"{path} (line {line}): expected {origin.__name__}, got {value!r}")
    if isinstance(value, list):
        return tuple(float(u) for u in value)
    return value


_FIELD_TYPES = {
    (InitialConditions, "gap"): float, (InitialConditions, "v_av"): float,
    (InitialConditions, "v_ped"): float, (InitialConditions, "a_av"): float,
    (InitialConditions, "ped_offset"): float,
    (AgentsConfig, "k_max"): int, (AgentsConfig, "lambda_init"): float,
    (AgentsConfig, "lambda_self"): float, (AgentsConfig, "lambda_max"): float,
    (AgentsConfig, "av_level_belief"): list, (AgentsConfig, "ped_level_belief"): list,
    (AgentsConfig, "ped_updates_beliefs"): bool,
    (AgentsConfig, "mix_level0"): bool,
    (SearchConfig, "iterations"): int, (SearchConfig, "max_depth"): int,
    (SearchConfig, "root_trees"): int, (SearchConfig, "opponent_argmax"): bool,
    (SamplingConfig, "n_samples"): int, (SamplingConfig, "history"): int,
}


def _build_section(cls, data, section, lines):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{section} (line {lines.get(section, '?')}): expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{section}.{key}"
        if key not in names:
            raise ConfigError(f"{path} (line {lines.get(path, '?')}): unknown field")
        kwargs[key] = _coerce(value, _FIELD_TYPES.get((cls, key), float), path, lines.get(path))
    required = [f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
    for name in required:
        if name not in kwargs:
            raise ConfigError(f"{section}.{name} (line {lines.get(section, '?')}): "
                              "missing required field")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        bad = next((k for k in sorted(kwargs, key=len, reverse=True) if msg.startswith(k)), None)
        path = f"{section}.{bad}" if bad else section
        raise ConfigError(f"{path} (line {lines.get(path, lines.get(section, '?'))}): {msg}")


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark else "unknown line"
        raise ConfigError(f"{source}: malformed YAML at {where}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    lines = _line_map(node)
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], value, key, lines)
        elif key in _TOP:
            kwargs[key] = _coerce(value, _TOP[key], key, lines.get(key))
        else:
            raise ConfigError(f"{key} (line {lines.get(key, '?')}): unknown field")
    if "initial" not in kwargs:
        raise ConfigError("initial (line ?): missing required section")
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        key = msg.split()[0]
        raise ConfigError(f"{key} (line {lines.get(key, '?')}): {msg}")


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    text = path.read_text()
    try:
        return parse_scenario(text, str(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def case_scenario(case: int, **initial_overrides) -> ScenarioConfig:
    """Built-in presets for the three qualitative cases (case 3 shares case 2's conditions)."""
    gaps = {1: 46.309, 2: 34.0, 3: 34.0}
    if case not in gaps:
        raise ValueError(f"unknown case {case!r}")
    init = dict(gap=gaps[case], v_av=9.348, a_av=-0.11, ped_offset=2.564, v_ped=0.03)
    init.update(initial_overrides)
    return ScenarioConfig(InitialConditions(**init), scenario_id=f"case{case}")
