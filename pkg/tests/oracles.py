"""Independent reference computations used by the tests."""
from __future__ import annotations

import numpy as np

GRID_POINTS = 100_001


def grid(lambda_max: float, n: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, lambda_max, n)


def sequential_grid_posterior(observations, lambda_max: float = 100.0,
                              prior: np.ndarray | None = None, n: int = GRID_POINTS):
    """Bayes rule applied one observation at a time on a uniform grid.

    ``observations`` is a sequence of (payoff_vector, chosen_index); each step
    multiplies by the logit likelihood and renormalizes by the trapezoid rule.
    """
    lam = grid(lambda_max, n)
    dens = np.ones_like(lam) if prior is None else prior.copy()
    dens /= np.trapezoid(dens, lam)
    for vec, idx in observations:
        v = np.asarray(vec, dtype=np.float64)
        z = lam[:, None] * (v - v.max())[None]
        lik = np.exp(z[:, idx]) / np.exp(z).sum(axis=1)
        dens = dens * lik
        dens /= np.trapezoid(dens, lam)
    return lam, dens


def trapezoid_mean(lam: np.ndarray, dens: np.ndarray) -> float:
    return float(np.trapezoid(lam * dens, lam) / np.trapezoid(dens, lam))


def expectimax(rewards: np.ndarray, successors: np.ndarray, node: int, opp_probs,
               depth: int, gamma: float) -> np.ndarray:
    """Exact action values at ``node`` with the opponent drawn from ``opp_probs``
    at every ply and the agent maximizing below the root."""
    m, nb = rewards.shape[1], rewards.shape[2]
    q = np.zeros(m)
    for a in range(m):
        total = 0.0
        for b in range(nb):
            r = rewards[node, a, b]
            nxt = successors[node, a, b]
            cont = 0.0
            if nxt >= 0 and depth > 1:
                cont = expectimax(rewards, successors, nxt, opp_probs, depth - 1, gamma).max()
            total += opp_probs[b] * (r + gamma * cont)
        q[a] = total
    return q


def random_tree_game(rng: np.random.Generator, m: int, nb: int, depth: int):
    """A layered deterministic game of the given depth with distinct nodes per history."""
    nodes = [0]
    edges = []
    frontier = [0]
    count = 1
    for d in range(depth):
        nxt_frontier = []
        for node in frontier:
            for a in range(m):
                for b in range(nb):
                    if d == depth - 1:
                        edges.append((node, a, b, -1))
                    else:
                        edges.append((node, a, b, count))
                        nxt_frontier.append(count)
                        count += 1
        frontier = nxt_frontier
    rewards = rng.uniform(-1.0, 1.0, size=(count, m, nb))
    successors = np.full((count, m, nb), -1, dtype=np.int64)
    for node, a, b, nx in edges:
        successors[node, a, b] = nx
    return rewards, successors
