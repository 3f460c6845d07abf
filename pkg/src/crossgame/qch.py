"""Quantal cognitive hierarchy solver.

Level-0 agents plan against a static opponent. A level-k agent plans
against the opponent's level-(k-1) quantal policy. The acting agent mixes
its own levels 1..K, weighting level k by its belief that the opponent
reasons at level k-1, and acts on the most probable action of the mixture.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mcts import derive_seed


@dataclass(frozen=True, eq=False)
class Policy:
    action_set: object  # ActionSet, or None for index-only toy actions
    probs: np.ndarray
    q: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must lie on the simplex")
        if self.action_set is not None and len(self.action_set) != probs.size:
            raise ValueError("probs and action_set differ in length")
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return self.probs.size


@dataclass(frozen=True, eq=False)
class LevelPolicySet:
    """``levels[player][k]`` for players 0 (AV), 1 (pedestrian) and k = 0..K."""

    levels: tuple[tuple[Policy, ...], tuple[Policy, ...]]

    def __post_init__(self):
        if len(self.levels) != 2 or len(self.levels[0]) != len(self.levels[1]):
            raise ValueError("need the same number of levels for both players")
        if len(self.levels[0]) < 2:
            raise ValueError("need levels 0..K with K >= 1")

    @property
    def k_max(self) -> int:
        return len(self.levels[0]) - 1

    def __getitem__(self, player: int) -> tuple[Policy, ...]:
        return self.levels[player]


def quantal_probs(q_values, lam: float) -> np.ndarray:
    q = np.asarray(q_values, dtype=np.float64)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("q_values must be a non-empty vector")
    if not np.all(np.isfinite(q)):
        raise ValueError("q_values must be finite")
    if not (np.isfinite(lam) and lam >= 0):
        raise ValueError(f"lambda must be finite and >= 0, got {lam!r}")
    z = lam * q
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def quantal_response(q_values, lam: float, action_set=None) -> Policy:
    """Logit choice ``exp(lam*q_j) / sum_l exp(lam*q_l)``."""
    q = np.asarray(q_values, dtype=np.float64)
    return Policy(action_set, quantal_probs(q, lam), q.copy())


def level0_policy(state, agent: int, planner, lam: float, own_actions, seed: int) -> Policy:
    """Quantal response to q-values estimated against a motionless opponent."""
    q = planner.q_values(state, agent, own_actions, None, seed)
    return quantal_response(q, lam, own_actions)


def compute_level_policies(state, action_sets: Sequence, k_max: int, lambda_self: float,
                           lambda_opp: float, planner, agent: int, seed: int) -> LevelPolicySet:
    """Policies for both players at levels 0..k_max.

    ``action_sets[p]`` is player p's candidate set; ``agent`` is the player
    doing the reasoning, whose rationality is ``lambda_self``.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    lam = {agent: lambda_self, 1 - agent: lambda_opp}
    levels: list[list[Policy]] = [[], []]
    for p in (0, 1):
        levels[p].append(level0_policy(state, p, planner, lam[p], action_sets[p],
                                       derive_seed(seed, p, 0)))
    for k in range(1, k_max + 1):
        for p in (0, 1):
            q = planner.q_values(state, p, action_sets[p], levels[1 - p][k - 1],
                                 derive_seed(seed, p, k))
            levels[p].append(quantal_response(q, lam[p], action_sets[p]))
    return LevelPolicySet((tuple(levels[0]), tuple(levels[1])))


def mix_and_select(policies: LevelPolicySet, level_belief, agent: int,
                   include_level0: bool = False) -> tuple[Policy, float]:
    """Belief-weighted mixture of the agent's level policies and its most probable action.

    By default own levels 1..K are weighted by ``belief[k-1]``. With
    ``include_level0`` levels 0..K-1 are weighted by ``belief[k]`` instead.
    Exact probability ties go to the action of smaller magnitude.
    """
    belief = np.asarray(getattr(level_belief, "probs", level_belief), dtype=np.float64)
    own = policies[agent]
    k_max = len(own) - 1
    if belief.size != k_max:
        raise ValueError(f"belief has {belief.size} entries, expected {k_max}")
    used = own[0:k_max] if include_level0 else own[1:k_max + 1]
    mixed = np.zeros(len(used[0]))
    for weight, pol in zip(belief, used):
        mixed += weight * pol.probs
    mixed /= mixed.sum()
    action_set = used[0].action_set
    values = (np.asarray(action_set.values, dtype=np.float64) if action_set is not None
              else np.arange(mixed.size, dtype=np.float64))
    best = np.flatnonzero(mixed == mixed.max())
    pick = int(best[np.lexsort((best, np.abs(values[best])))[0]])
    return Policy(action_set, mixed), float(values[pick])
