"""Monte Carlo Tree Search payoff estimator with UCT selection.

The tree lives in flat arrays inside a numba kernel. Each agent node picks
its own action by UCT; the opponent's action at that ply is drawn from the
opponent model (a fixed distribution over its actions, or "static", meaning
the opponent does not move). Children are keyed by the joint action, which
is exact because transitions are deterministic given both actions.

Two worlds are compiled into the kernel: the crossing world used by the
simulator and a tabular game used to check the search against exhaustive
expectimax.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .env import (A_MAX, COLLISION_SUBSTEPS, Geometry, WorldState, next_time, swept_collision,
                  vehicle_motion)
from .payoff import V_PED_MAX, UtilityWeights, step_utility

CROSSING = 0
TABULAR = 1


class SearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    iterations: int = 2000
    max_depth: int = 5
    c_uct: float = 1.414
    gamma: float = 0.95
    root_trees: int = 1
    opponent_argmax: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.c_uct < 0:
            raise ValueError("c_uct must be >= 0")
        if self.root_trees < 1:
            raise ValueError("root_trees must be >= 1")


def uct_value(mean_return: float, n_state: int, n_action: int, c: float) -> float:
    if n_action == 0:
        return math.inf
    if n_state < n_action:
        raise ValueError("n_state must be >= n_action")
    return mean_return + c * math.sqrt(math.log(n_state) / n_action)


# -- worlds --------------------------------------------------------------------


@dataclass(frozen=True)
class CrossingWorld:
    """The road crossing, with rewards divided by ``reward_scale``."""

    geom: Geometry
    weights: UtilityWeights
    dt: float = 0.8
    horizon: float = 40.0
    reward_scale: float = 1.0

    kind = CROSSING

    def params(self) -> np.ndarray:
        g, w = self.geom, self.weights
        return np.array([
            self.dt, g.vehicle_length, g.vehicle_width, g.lane_width, g.conflict_x,
            g.ped_radius, A_MAX, V_PED_MAX, w.w_collision, w.w_speed_dev, w.w_accel,
            w.w_progress, w.w_wait, w.v_des, self.horizon, self.reward_scale,
            float(COLLISION_SUBSTEPS),
        ])

    def tables(self):
        return _EMPTY_R, _EMPTY_NEXT

    def encode(self, state: WorldState) -> np.ndarray:
        return np.array(state.as_tuple(), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class TabularGame:
    """Deterministic finite game seen from one agent.

    ``rewards[s, a, b]`` is the agent's reward for own action ``a`` and
    opponent action ``b`` in node ``s``; ``successors[s, a, b]`` is the next
    node or -1 when the game ends. A static opponent plays action 0.
    """

    rewards: np.ndarray
    successors: np.ndarray

    kind = TABULAR

    def params(self) -> np.ndarray:
        return _EMPTY_PARAMS

    def tables(self):
        return (np.ascontiguousarray(self.rewards, dtype=np.float64),
                np.ascontiguousarray(self.successors, dtype=np.int64))

    def encode(self, state) -> np.ndarray:
        return np.array([float(state)])


_EMPTY_PARAMS = np.zeros(1)
_EMPTY_R = np.zeros((1, 1, 1))
_EMPTY_NEXT = np.zeros((1, 1, 1), dtype=np.int64)


@njit(cache=True, nogil=True)
def _crossing_transition(s, agent, own_val, opp_val, static, p, out):
    dt = p[0]
    t, x, v, a, y = s[0], s[1], s[2], s[3], s[4]
    if agent == 0:
        a_av = own_val
        v_ped = 0.0 if static else opp_val
        v_eff = v
    else:
        v_ped = own_val
        if static:
            a_av = 0.0
            v_eff = 0.0
        else:
            a_av = opp_val
            v_eff = v
    collided = swept_collision(x, v_eff, a_av, y, v_ped, dt, p[1], p[2], p[3], p[4], p[5],
                               int(p[16]))
    crossed_y = p[3] + p[5]
    r = step_utility(agent, v, y, a_av, v_ped, collided, crossed_y, dt,
                     p[8], p[9], p[10], p[11], p[12], p[13], p[7], p[6]) / p[15]
    if agent == 1 and static:
        x1, v1, a1 = x, v, a
    else:
        x1, v1 = vehicle_motion(x, v, a_av, dt)
        a1 = a_av
    t1 = next_time(t, dt)
    y1 = y + v_ped * dt
    out[0] = t1
    out[1] = x1
    out[2] = v1
    out[3] = a1
    out[4] = y1
    out[5] = v_ped
    terminal = (collided or y1 >= crossed_y or x1 - 0.5 * p[1] > p[4]
                or t1 >= p[14] - 1e-9)
    return r, terminal


@njit(cache=True, nogil=True)
def _transition(kind, s, agent, ai, own_val, bi, opp_val, static, p, tab_r, tab_next, out):
    if kind == 0:
        return _crossing_transition(s, agent, own_val, opp_val, static, p, out)
    node = int(s[0])
    if static:
        bi = 0
    nxt = tab_next[node, ai, bi]
    out[0] = float(nxt)
    return tab_r[node, ai, bi], nxt < 0


@njit(cache=True, nogil=True)
def _sample_index(cdf):
    u = np.random.random()
    i = 0
    last = cdf.size - 1
    while i < last and u >= cdf[i]:
        i += 1
    return i


@njit(cache=True, nogil=True)
def _select(n_state, n_act, w_act, c):
    best = 0
    best_val = -np.inf
    log_n = math.log(n_state) if n_state > 0 else 0.0
    for a in range(n_act.size):
        if n_act[a] == 0:
            return a
        val = w_act[a] / n_act[a] + c * math.sqrt(log_n / n_act[a])
        if val > best_val:
            best_val = val
            best = a
    return best


@njit(cache=True, nogil=True)
def _rollout(kind, state, agent, own, opp, opp_cdf, static, p, tab_r, tab_next,
             depth, gamma, buf_a, buf_b):
    buf_a[:] = state
    g = 0.0
    disc = 1.0
    m = own.size
    for _ in range(depth):
        ai = int(np.random.random() * m)
        if ai >= m:
            ai = m - 1
        bi = _sample_index(opp_cdf)
        r, term = _transition(kind, buf_a, agent, ai, own[ai], bi, opp[bi], static, p,
                              tab_r, tab_next, buf_b)
        g += disc * r
        disc *= gamma
        buf_a, buf_b = buf_b, buf_a
        if term:
            break
    return g


@njit(cache=True, nogil=True)
def rollout_kernel(kind, state, agent, own, opp, opp_cdf, static, p, tab_r, tab_next,
                   depth, gamma, seed):
    np.random.seed(seed)
    buf_a = np.empty(state.size)
    buf_b = np.empty(state.size)
    return _rollout(kind, state, agent, own, opp, opp_cdf, static, p, tab_r, tab_next,
                    depth, gamma, buf_a, buf_b)


@njit(cache=True, nogil=True)
def search_kernel(kind, root, agent, own, opp, opp_cdf, static, p, tab_r, tab_next,
                  iterations, max_depth, c, gamma, seed):
    """Run ``iterations`` UCT cycles; returns root (return sums, visit counts, node visits)."""
    np.random.seed(seed)
    m = own.size
    nb = opp.size
    sd = root.size
    cap = iterations + 1
    node_state = np.empty((cap, sd))
    node_state[0] = root
    node_term = np.zeros(cap, dtype=np.bool_)
    node_reward = np.zeros(cap)
    child = np.full((cap, m, nb), -1, dtype=np.int32)
    n_state = np.zeros(cap, dtype=np.int64)
    n_act = np.zeros((cap, m), dtype=np.int64)
    w_act = np.zeros((cap, m))
    path_node = np.empty(max_depth, dtype=np.int64)
    path_act = np.empty(max_depth, dtype=np.int64)
    path_rew = np.empty(max_depth)
    buf_a = np.empty(sd)
    buf_b = np.empty(sd)
    n_nodes = 1
    for _ in range(iterations):
        node = 0
        d = 0
        tail = 0.0
        while d < max_depth and not node_term[node]:
            a = _select(n_state[node], n_act[node], w_act[node], c)
            bi = _sample_index(opp_cdf)
            ch = child[node, a, bi]
            path_node[d] = node
            path_act[d] = a
            if ch < 0:
                ch = n_nodes
                n_nodes += 1
                r, term = _transition(kind, node_state[node], agent, a, own[a], bi, opp[bi],
                                      static, p, tab_r, tab_next, node_state[ch])
                node_term[ch] = term
                node_reward[ch] = r
                child[node, a, bi] = ch
                path_rew[d] = r
                d += 1
                if not term and d < max_depth:
                    tail = _rollout(kind, node_state[ch], agent, own, opp, opp_cdf, static, p,
                                    tab_r, tab_next, max_depth - d, gamma, buf_a, buf_b)
                break
            path_rew[d] = node_reward[ch]
            node = ch
            d += 1
        g = tail
        for i in range(d - 1, -1, -1):
            g = path_rew[i] + gamma * g
            nd = path_node[i]
            n_state[nd] += 1
            n_act[nd, path_act[i]] += 1
            w_act[nd, path_act[i]] += g
    # N_s == sum N_a must hold at every expanded node
    consistent = True
    for nd in range(n_nodes):
        total = 0
        for a in range(m):
            total += n_act[nd, a]
        if total != n_state[nd]:
            consistent = False
    return w_act[0].copy(), n_act[0].copy(), consistent


# -- Python API ----------------------------------------------------------------


def derive_seed(*key: int) -> int:
    """Platform-stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, np.uint32)[0])


def _opponent_arrays(opponent, argmax: bool):
    if opponent is None:
        return np.zeros(1), np.ones(1), True
    values = np.asarray(opponent.action_set.values, dtype=np.float64)
    probs = np.asarray(opponent.probs, dtype=np.float64)
    if argmax:
        one_hot = np.zeros_like(probs)
        one_hot[int(np.argmax(probs))] = 1.0
        probs = one_hot
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    return values, cdf, False


def estimate_action_values(world, state, agent: int, own_actions, opponent,
                           config: SearchConfig, seed: int, workers: int = 1) -> np.ndarray:
    """Mean discounted return of each own root action.

    ``opponent`` is a policy-like object (``action_set``, ``probs``) or
    ``None`` for a static opponent. With ``root_trees > 1`` independent
    trees are grown from derived seeds and merged by visit-weighted
    averaging in tree order, so the result does not depend on ``workers``.
    """
    root = world.encode(state)
    own = np.asarray(getattr(own_actions, "values", own_actions), dtype=np.float64)
    if own.size == 0:
        raise ValueError("own action set is empty")
    opp, cdf, static = _opponent_arrays(opponent, config.opponent_argmax)
    p = world.params()
    tab_r, tab_next = world.tables()

    def run(tree: int):
        return search_kernel(world.kind, root, agent, own, opp, cdf, static, p, tab_r,
                             tab_next, config.iterations, config.max_depth, config.c_uct,
                             config.gamma, derive_seed(seed, tree))

    trees = range(config.root_trees)
    if workers > 1 and config.root_trees > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, trees))
    else:
        results = [run(i) for i in trees]
    w = np.zeros(own.size)
    n = np.zeros(own.size, dtype=np.int64)
    for w_i, n_i, ok in results:
        if not ok:
            raise SearchError("visit bookkeeping violated: N_s != sum N_a")
        w += w_i
        n += n_i
    if np.any(n == 0):
        raise SearchError(
            f"{int(np.sum(n == 0))} root action(s) never visited; "
            f"iterations={config.iterations} too small for {own.size} actions "
            "or the root state is terminal")
    return w / n


def rollout(world, state, agent: int, own_actions, opponent, depth: int, gamma: float,
            seed: int) -> float:
    """Discounted return of one uniform-random playout of at most ``depth`` plies."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    own = np.asarray(getattr(own_actions, "values", own_actions), dtype=np.float64)
    opp, cdf, static = _opponent_arrays(opponent, False)
    tab_r, tab_next = world.tables()
    return float(rollout_kernel(world.kind, world.encode(state), agent, own, opp, cdf, static,
                                world.params(), tab_r, tab_next, depth, gamma,
                                derive_seed(seed, 0)))


@dataclass(frozen=True)
class Planner:
    """Bundles a world and search settings; what the QCH solver calls for q-values."""

    world: object
    config: SearchConfig = SearchConfig()
    workers: int = 1
    q_scale: float = 1.0  # multiplies search returns into the units fed to the quantal response

    def q_values(self, state, agent: int, own_actions, opponent, seed: int) -> np.ndarray:
        q = estimate_action_values(self.world, state, agent, own_actions, opponent,
                                   self.config, seed, self.workers)
        return q * self.q_scale
