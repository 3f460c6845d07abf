"""Per-step utilities for the vehicle (player 0) and the pedestrian (player 1)."""
from __future__ import annotations

import math
from dataclasses import dataclass

from numba import njit

from .env import A_MAX, COLLISION_SUBSTEPS, Geometry, WorldState, swept_collision

AV = 0
PED = 1
V_PED_MAX = 1.2


@dataclass(frozen=True)
class UtilityWeights:
    w_collision: float = 1000.0
    w_speed_dev: float = 1.0
    w_accel: float = 0.5
    w_progress: float = 1.0
    w_wait: float = 0.2
    v_des: float = 10.0
    horizon_steps: int = 50

    def __post_init__(self):
        for name in ("w_collision", "w_speed_dev", "w_accel", "w_progress", "w_wait"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if not (math.isfinite(self.v_des) and self.v_des > 0):
            raise ValueError(f"v_des must be finite and > 0, got {self.v_des!r}")
        others = self.w_speed_dev + self.w_accel + self.w_progress + self.w_wait
        if not self.w_collision > self.horizon_steps * others:
            raise ValueError(
                f"w_collision={self.w_collision} must exceed horizon_steps * other weights "
                f"= {self.horizon_steps * others}"
            )

    @property
    def step_bound(self) -> float:
        """Upper bound on |utility| for one step."""
        return self.w_collision + self.w_speed_dev + self.w_accel + self.w_progress + self.w_wait


@njit(cache=True)
def step_utility(agent, v, y, a_av, v_ped, collided, crossed_y, dt,
                 w_collision, w_speed_dev, w_accel, w_progress, w_wait, v_des, v_ped_max, a_max):
    """Utility of one step from the pre-step speed ``v`` and pedestrian position ``y``."""
    penalty = w_collision if collided else 0.0
    if agent == 0:
        dev = (v - v_des) / v_des
        acc = a_av / a_max
        return -penalty - w_speed_dev * dev * dev - w_accel * acc * acc
    progress = (v_ped * dt) / (v_ped_max * dt)
    waiting = w_wait if (v_ped == 0.0 and y < crossed_y) else 0.0
    return -penalty + w_progress * progress - waiting


def utility(state: WorldState, a_av: float, v_ped: float, agent: int,
            weights: UtilityWeights, geom: Geometry, dt: float = 0.8,
            collided: bool | None = None) -> float:
    """Utility of applying ``(a_av, v_ped)`` in ``state`` for ``agent`` (0 = AV, 1 = pedestrian)."""
    if agent not in (AV, PED):
        raise ValueError(f"agent must be 0 or 1, got {agent!r}")
    if collided is None:
        collided = bool(swept_collision(
            state.av.x, state.av.v, a_av, state.ped.y, v_ped, dt,
            geom.vehicle_length, geom.vehicle_width, geom.lane_width,
            geom.conflict_x, geom.ped_radius, COLLISION_SUBSTEPS))
    return float(step_utility(
        agent, state.av.v, state.ped.y, a_av, v_ped, collided, geom.crossed_y, dt,
        weights.w_collision, weights.w_speed_dev, weights.w_accel, weights.w_progress,
        weights.w_wait, weights.v_des, V_PED_MAX, A_MAX))

