"""Kinematic world model for a single-lane road crossed by one pedestrian.

Road-local frame: ``x`` runs along the lane (vehicle center), ``y`` runs
across it with 0 at the near curb. The pedestrian walks along the crossing
line ``x = conflict_x``; negative ``y`` means it is still on the sidewalk.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from numba import njit

A_MIN = -5.0
A_MAX = 5.0
COLLISION_SUBSTEPS = 16


@dataclass(frozen=True)
class VehicleState:
    x: float
    v: float
    a: float = 0.0


@dataclass(frozen=True)
class PedestrianState:
    y: float
    v: float = 0.0


@dataclass(frozen=True)
class Geometry:
    vehicle_length: float = 5.0
    vehicle_width: float = 2.0
    lane_width: float = 3.65
    conflict_x: float = 100.0
    ped_radius: float = 0.3

    def __post_init__(self):
        for name in ("vehicle_length", "vehicle_width", "lane_width", "conflict_x", "ped_radius"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def crossed_y(self) -> float:
        """Lateral position at which the pedestrian has cleared the lane."""
        return self.lane_width + self.ped_radius


@dataclass(frozen=True)
class WorldState:
    t: float
    av: VehicleState
    ped: PedestrianState

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.t, self.av.x, self.av.v, self.av.a, self.ped.y, self.ped.v)

    @classmethod
    def from_tuple(cls, values) -> "WorldState":
        t, x, v, a, y, vp = (float(u) for u in values)
        return cls(t, VehicleState(x, v, a), PedestrianState(y, vp))


class Terminal(str, enum.Enum):
    NONE = "none"
    COLLISION = "collision"
    PED_CROSSED = "ped_crossed"
    AV_PASSED = "av_passed"
    TIMEOUT = "timeout"


# -- numba kernels shared with the planner -------------------------------------


@njit(cache=True)
def vehicle_motion(x, v, a, tau):
    """Position and speed after holding ``a`` for ``tau`` seconds; speed never goes negative."""
    v_end = v + a * tau
    if v_end >= 0.0:
        return x + v * tau + 0.5 * a * tau * tau, v_end
    # stops inside the interval: integrate only up to the stop time
    if v <= 0.0:
        return x, 0.0
    return x + v * v / (-2.0 * a), 0.0


@njit(cache=True)
def overlaps(x, y, length, width, lane_width, conflict_x, radius):
    """Closed disc-rectangle intersection between pedestrian and vehicle footprint."""
    dx = abs(conflict_x - x) - 0.5 * length
    dy = abs(y - 0.5 * lane_width) - 0.5 * width
    if dx < 0.0:
        dx = 0.0
    if dy < 0.0:
        dy = 0.0
    return dx * dx + dy * dy <= radius * radius


@njit(cache=True)
def next_time(t, dt):
    return (math.floor(t / dt + 0.5) + 1.0) * dt


@njit(cache=True)
def swept_collision(x, v, a, y, v_ped, dt, length, width, lane_width, conflict_x, radius, substeps):
    """Whether the footprints touch at any sampled instant in ``(0, dt]``."""
    # x and y are monotone over the step, so disjoint bounding intervals rule out contact
    x_end, _ = vehicle_motion(x, v, a, dt)
    if x_end < conflict_x - 0.5 * length - radius or x > conflict_x + 0.5 * length + radius:
        return False
    y_end = y + v_ped * dt
    half = 0.5 * width + radius
    if y_end < 0.5 * lane_width - half or y > 0.5 * lane_width + half:
        return False
    for j in range(1, substeps + 1):
        tau = dt * j / substeps
        xj, _ = vehicle_motion(x, v, a, tau)
        if overlaps(xj, y + v_ped * tau, length, width, lane_width, conflict_x, radius):
            return True
    return False


# -- public value-semantics API ------------------------------------------------


def _check_finite(**values):
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


def step(state: WorldState, a_av: float, v_ped: float, dt: float) -> WorldState:
    """Advance both agents by one zero-order-hold step of length ``dt``."""
    _check_finite(a_av=a_av, v_ped=v_ped, dt=dt)
    _check_finite(**dict(zip(("t", "x", "v", "a", "y", "ped_v"), state.as_tuple())))
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not A_MIN <= a_av <= A_MAX:
        raise ValueError(f"a_av={a_av} outside [{A_MIN}, {A_MAX}]")
    if v_ped < 0:
        raise ValueError(f"v_ped={v_ped} must be >= 0")
    x, v = vehicle_motion(state.av.x, state.av.v, a_av, dt)
    return WorldState(
        t=next_time(state.t, dt),
        av=VehicleState(x, v, float(a_av)),
        ped=PedestrianState(state.ped.y + v_ped * dt, float(v_ped)),
    )


def check_collision(state: WorldState, geom: Geometry) -> bool:
    """Instantaneous collision predicate on a single state."""
    return bool(overlaps(state.av.x, state.ped.y, geom.vehicle_length, geom.vehicle_width,
                         geom.lane_width, geom.conflict_x, geom.ped_radius))


def collided_during_step(state: WorldState, a_av: float, v_ped: float, dt: float,
                         geom: Geometry, substeps: int = COLLISION_SUBSTEPS) -> bool:
    """Collision anywhere along the step, not just at its end.

    At 0.8 s steps the vehicle covers more than its own length, so checking
    only the end state would let it pass through the pedestrian.
    """
    return bool(swept_collision(state.av.x, state.av.v, a_av, state.ped.y, v_ped, dt,
                                geom.vehicle_length, geom.vehicle_width, geom.lane_width,
                                geom.conflict_x, geom.ped_radius, substeps))


def is_terminal(state: WorldState, geom: Geometry, horizon: float = 40.0,
                collided: bool = False) -> Terminal:
    """Episode status of ``state``; ``collided`` carries a swept-collision result in."""
    if collided or check_collision(state, geom):
        return Terminal.COLLISION
    if state.ped.y >= geom.crossed_y:
        return Terminal.PED_CROSSED
    if state.av.x - 0.5 * geom.vehicle_length > geom.conflict_x:
        return Terminal.AV_PASSED
    if state.t >= horizon - 1e-9:
        return Terminal.TIMEOUT
    return Terminal.NONE


def initial_state(gap: float, v_av: float, a_av: float, ped_offset: float, v_ped: float,
                  geom: Geometry) -> WorldState:
    """Build ``t=0`` state from scenario quantities.

    ``gap`` is vehicle front to crossing line; ``ped_offset`` is the
    pedestrian's distance from the near curb (positive = on the sidewalk).
    """
    x0 = geom.conflict_x - gap - 0.5 * geom.vehicle_length
    return WorldState(0.0, VehicleState(x0, v_av, a_av), PedestrianState(-ped_offset, v_ped))


def with_time(state: WorldState, t: float) -> WorldState:
    return replace(state, t=t)
