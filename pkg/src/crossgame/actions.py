"""Action sets: the pedestrian's fixed speed grid and the vehicle's sampled accelerations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .env import A_MAX, A_MIN, Geometry, WorldState

PED_SPEEDS = tuple(i / 10 for i in range(13))


@dataclass(frozen=True)
class ActionSet:
    values: tuple[float, ...]
    kind: str  # "vehicle" | "pedestrian"

    def __post_init__(self):
        if not self.values:
            raise ValueError("action set must be non-empty")
        if self.kind not in ("vehicle", "pedestrian"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if len(set(self.values)) != len(self.values):
            raise ValueError("action values must be unique")
        if self.kind == "vehicle" and not all(A_MIN <= u <= A_MAX for u in self.values):
            raise ValueError("vehicle actions must lie in [-5, 5]")

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> float:
        return self.values[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def pedestrian_action_set() -> ActionSet:
    return ActionSet(PED_SPEEDS, "pedestrian")


class ProposalSource(Protocol):
    """Anything that maps a recent state window to a mean vehicle acceleration."""

    def __call__(self, history: Sequence[WorldState]) -> float: ...


def clamp_accel(a: float) -> float:
    return min(max(a, A_MIN), A_MAX)


@dataclass(frozen=True)
class HeuristicProposal:
    """Time-gap yielding rule used as the default proposal.

    The vehicle's occupancy window of the crossing (at constant speed) is
    compared with the pedestrian's corridor window (at ``v_walk``). On
    overlap within ``gap_threshold`` seconds the rule proposes the constant
    deceleration that brings the vehicle front to the crossing
    ``gap_threshold`` after the pedestrian would clear the corridor. That
    yield term is weighted by how committed the pedestrian looks: fully
    once it is on the road, otherwise by its speed relative to ``v_walk``.
    The remaining weight goes to restoring ``v_des`` under ``comfort_cap``.
    """

    geom: Geometry
    v_des: float
    dt: float = 0.8
    comfort_cap: float = 1.0
    gap_threshold: float = 2.0
    v_walk: float = 1.2

    def cruise(self, v: float) -> float:
        a = (self.v_des - v) / self.dt
        return min(max(a, -self.comfort_cap), self.comfort_cap)

    def yield_accel(self, state: WorldState) -> float | None:
        """Yielding deceleration if the arrival windows conflict, else ``None``."""
        g = self.geom
        r = g.ped_radius
        y_in = 0.5 * (g.lane_width - g.vehicle_width) - r
        y_out = 0.5 * (g.lane_width + g.vehicle_width) + r
        y = state.ped.y
        if y >= y_out:
            return None
        front = state.av.x + 0.5 * g.vehicle_length
        rear = state.av.x - 0.5 * g.vehicle_length
        dist_in = g.conflict_x - r - front
        if rear > g.conflict_x + r or dist_in <= 0.0:
            return None
        v = state.av.v
        if v <= 1e-9:
            return None  # already stopped short of the crossing
        t_av_in = dist_in / v
        t_av_out = (g.conflict_x + r - rear) / v
        t_ped_in = max(0.0, (y_in - y) / self.v_walk)
        t_ped_out = (y_out - y) / self.v_walk
        gap = self.gap_threshold
        if t_av_in - gap > t_ped_out or t_av_out + gap < t_ped_in:
            return None
        horizon = t_ped_out + gap
        a_time = 2.0 * (dist_in - v * horizon) / (horizon * horizon)
        a_stop = -v * v / (2.0 * dist_in)
        return max(a_time, a_stop)

    def __call__(self, history: Sequence[WorldState]) -> float:
        if not history:
            raise ValueError("history must be non-empty")
        state = history[-1]
        a_cruise = self.cruise(state.av.v)
        a_yield = self.yield_accel(state)
        if a_yield is None:
            return clamp_accel(a_cruise)
        if state.ped.y >= 0.0:
            commitment = 1.0
        else:
            commitment = min(1.0, max(0.0, state.ped.v / self.v_walk))
        return clamp_accel(commitment * a_yield + (1.0 - commitment) * a_cruise)


def sample_av_actions(mean: float, sigma: float, n: int, rng: np.random.Generator) -> ActionSet:
    """The proposal mean followed by ``n`` clamped Gaussian draws around it."""
    if not math.isfinite(mean):
        raise ValueError(f"mean must be finite, got {mean!r}")
    if n < 0:
        raise ValueError("n must be >= 0")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    mean = clamp_accel(float(mean))
    draws = np.clip(rng.normal(mean, sigma, size=n), A_MIN, A_MAX)
    values = [mean]
    seen = {mean}
    for d in draws.tolist():
        if d not in seen:
            seen.add(d)
            values.append(d)
    return ActionSet(tuple(values), "vehicle")
