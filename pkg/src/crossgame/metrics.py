"""Per-episode and batch statistics over simulation traces.

Jerk is the first difference of the recorded accelerations divided by the
step length, reported in m/s^3. The acceleration sequence starts with the
initial state's acceleration and continues with the applied action of
every step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .env import Geometry, Terminal


@dataclass(frozen=True)
class EpisodeMetrics:
    collided: bool
    yielded: bool
    mean_speed: float  # m/s
    mean_jerk: float  # m/s^3
    max_abs_accel: float  # m/s^2

    def __post_init__(self):
        if self.mean_speed < 0:
            raise ValueError("mean_speed must be >= 0")
        if self.max_abs_accel > 5.0 + 1e-12:
            raise ValueError("max_abs_accel must be <= 5")


@dataclass(frozen=True)
class BatchSummary:
    scenario_id: str
    episodes: int
    collision_rate: float
    yielding_rate: float
    mean_speed: float
    mean_jerk: float
    mean_max_abs_accel: float

    COLUMNS = ("scenario_id", "episodes", "collision_rate", "yielding_rate", "mean_speed",
               "mean_jerk", "mean_max_abs_accel")

    def row(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]


def pedestrian_yielded_to(states, geom: Geometry, collided: bool) -> bool:
    """True iff the pedestrian reaches the far side of the lane before the vehicle's
    front reaches the crossing line. Collision is checked first and forces False."""
    if collided:
        return False
    line = geom.conflict_x - geom.ped_radius
    for s in states:
        front = s.av.x + 0.5 * geom.vehicle_length
        if front >= line:
            return False
        if s.ped.y >= geom.crossed_y:
            return True
    return False


def episode_metrics(trace, geom: Geometry) -> EpisodeMetrics:
    if not trace.steps:
        raise ValueError("episode_metrics needs a trace with at least one step")
    states = trace.states
    accel = np.array([s.av.a for s in states])
    speed = np.array([s.av.v for s in states])
    jerk = np.abs(np.diff(accel)) / trace.dt
    collided = trace.terminal is Terminal.COLLISION
    return EpisodeMetrics(
        collided=collided,
        yielded=pedestrian_yielded_to(states, geom, collided),
        mean_speed=float(speed.mean()),
        mean_jerk=float(jerk.mean()) if jerk.size else 0.0,
        max_abs_accel=float(np.abs(accel).max()),
    )


def batch_summary(metrics: Iterable[EpisodeMetrics], scenario_id: str = "all") -> BatchSummary:
    items = list(metrics)
    if not items:
        raise ValueError("batch_summary needs at least one episode")

    def mean(values):
        return float(np.mean(list(values)))

    return BatchSummary(
        scenario_id=scenario_id,
        episodes=len(items),
        collision_rate=mean(m.collided for m in items),
        yielding_rate=mean(m.yielded for m in items),
        mean_speed=mean(m.mean_speed for m in items),
        mean_jerk=mean(m.mean_jerk for m in items),
        mean_max_abs_accel=mean(m.max_abs_accel for m in items),
    )
