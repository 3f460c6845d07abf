"""Closed-loop episodes between two belief-updating QCH agents (or scripted stand-ins)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import env
from .actions import HeuristicProposal, ActionSet, pedestrian_action_set, sample_av_actions
from .belief import (LambdaPosterior, LevelBelief, belief_update, calibrated_prior,
                     lambda_summary, match_observed_action)
from .config import ScenarioConfig
from .env import Terminal, WorldState
from .mcts import CrossingWorld, Planner, SearchConfig, derive_seed
from .payoff import AV, PED, UtilityWeights, utility
from .qch import LevelPolicySet, compute_level_policies, mix_and_select


class EpisodeError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class AgentSpec:
    kind: str = "db_qch"  # "db_qch" | "scripted"
    lambda_self: float = 10.0
    lambda_init: float = 10.0
    lambda_max: float = 100.0
    level_belief_init: tuple[float, ...] | None = None
    k_max: int = 2
    search: SearchConfig = field(default_factory=SearchConfig)
    weights: UtilityWeights | None = None
    update_beliefs: bool = True
    mix_level0: bool = False
    script: tuple[float, ...] = ()  # scripted actions; the last one is held

    def __post_init__(self):
        if self.kind not in ("db_qch", "scripted"):
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.kind == "scripted" and not self.script:
            raise ValueError("scripted agent needs a non-empty script")

    def scripted_action(self, step: int) -> float:
        return self.script[min(step, len(self.script) - 1)]


def default_agent_specs(scenario: ScenarioConfig) -> tuple[AgentSpec, AgentSpec]:
    a = scenario.agents
    common = dict(lambda_self=a.lambda_self, lambda_init=a.lambda_init,
                  lambda_max=a.lambda_max, k_max=a.k_max, search=scenario.search,
                  weights=scenario.utility_weights(), mix_level0=a.mix_level0)
    return (AgentSpec(level_belief_init=a.av_level_belief, **common),
            AgentSpec(level_belief_init=a.ped_level_belief, update_beliefs=a.ped_updates_beliefs,
                      **common))


@dataclass(frozen=True)
class StepRecord:
    step: int
    state: WorldState  # after the step; av.a and ped.v are the applied actions
    utility_av: float
    utility_ped: float
    av_level_belief: tuple[float, ...]  # AV's belief over pedestrian levels
    av_lambda: float  # AV's E(lambda) of the pedestrian
    av_log_norm: float
    ped_level_belief: tuple[float, ...]
    ped_lambda: float  # pedestrian's E(lambda) of the AV
    ped_log_norm: float
    terminal: Terminal

    @property
    def a_av(self) -> float:
        return self.state.av.a

    @property
    def v_ped(self) -> float:
        return self.state.ped.v


@dataclass(frozen=True)
class SimulationTrace:
    scenario_id: str
    seed: int
    config_hash: str
    dt: float
    k_max: int
    initial_state: WorldState
    initial_av_lambda: float
    initial_ped_lambda: float
    steps: tuple[StepRecord, ...]
    horizon: float = 40.0

    @property
    def terminal(self) -> Terminal:
        return self.steps[-1].terminal if self.steps else Terminal.NONE

    @property
    def states(self) -> list[WorldState]:
        return [self.initial_state] + [r.state for r in self.steps]


class _Agent:
    """Per-episode runtime of one DB-QCH agent."""

    def __init__(self, player: int, spec: AgentSpec, scenario: ScenarioConfig, seed: int):
        self.player = player
        self.opponent = 1 - player
        self.spec = spec
        self.scenario = scenario
        self.seed = seed
        weights = spec.weights or scenario.utility_weights()
        search_scale = weights.step_bound
        self.world = CrossingWorld(scenario.geometry, weights, scenario.dt, scenario.horizon,
                                   search_scale)
        self.planner = Planner(self.world, spec.search,
                               q_scale=search_scale / scenario.payoff_scale_value())
        self.proposal = HeuristicProposal(scenario.geometry, weights.v_des, scenario.dt,
                                          scenario.sampling.comfort_cap,
                                          scenario.sampling.gap_threshold)
        self.rng = np.random.default_rng(derive_seed(seed, player, 1))
        k = spec.k_max
        self.level_belief = (LevelBelief(spec.level_belief_init) if spec.level_belief_init
                             else LevelBelief.uniform(k))
        self.posterior = calibrated_prior(spec.lambda_init, k, spec.lambda_max)
        summary = lambda_summary(self.posterior)
        self.e_lambda = summary.mean
        self.log_norm = summary.log_normalizer
        self._last: tuple[ActionSet, LevelPolicySet] | None = None

    def _vehicle_set(self, history: Sequence[WorldState]) -> ActionSet:
        s = self.scenario.sampling
        return sample_av_actions(self.proposal(history), s.sigma, s.n_samples, self.rng)

    def decide(self, history: Sequence[WorldState], step: int) -> float:
        state = history[-1]
        av_set = self._vehicle_set(history)
        sets = (av_set, pedestrian_action_set())
        policies = compute_level_policies(
            state, sets, self.spec.k_max, self.spec.lambda_self, self.e_lambda,
            self.planner, self.player, derive_seed(self.seed, step, self.player, 2))
        self._last = (sets[self.opponent], policies)
        _, action = mix_and_select(policies, self.level_belief, self.player,
                                   self.spec.mix_level0)
        return action

    def observe(self, opponent_action: float) -> None:
        if not self.spec.update_beliefs or self._last is None:
            return
        predicted, policies = self._last
        idx = match_observed_action(predicted, opponent_action)
        opp_levels = policies[self.opponent][: self.spec.k_max]
        up = belief_update(self.level_belief, self.posterior, opp_levels, idx)
        self.level_belief = up.level_belief
        self.posterior = up.posterior
        self.e_lambda = up.expected_lambda
        self.log_norm = up.log_normalizer


def _history(states: list[WorldState], window: int) -> list[WorldState]:
    recent = states[-window:]
    return [states[0]] * (window - len(recent)) + recent


def _nan_belief(k: int) -> tuple[float, ...]:
    return (math.nan,) * k


def run_episode(scenario: ScenarioConfig, av: AgentSpec | None = None,
                ped: AgentSpec | None = None, seed: int = 0) -> SimulationTrace:
    """Simulate until collision, crossing, passing or timeout.

    Both agents choose from the same pre-step state, the joint action is
    applied, and each DB-QCH agent then updates its beliefs from the
    opponent's realized action.
    """
    default_av, default_ped = default_agent_specs(scenario)
    av = av or default_av
    ped = ped or default_ped
    geom = scenario.geometry
    init = scenario.initial
    state = env.initial_state(init.gap, init.v_av, init.a_av, init.ped_offset, init.v_ped, geom)
    agents = {}
    for player, spec in ((AV, av), (PED, ped)):
        if spec.kind == "db_qch":
            agents[player] = _Agent(player, spec, scenario, seed)
    k = scenario.agents.k_max
    w_av = (av.weights or scenario.utility_weights())
    w_ped = (ped.weights or scenario.utility_weights())
    states = [state]
    records = []
    step = 0
    status = env.is_terminal(state, geom, scenario.horizon)
    while status is Terminal.NONE:
        try:
            history = _history(states, scenario.sampling.history)
            actions = {}
            for player, spec in ((AV, av), (PED, ped)):
                if player in agents:
                    actions[player] = agents[player].decide(history, step)
                else:
                    actions[player] = spec.scripted_action(step)
            a_av, v_ped = actions[AV], actions[PED]
            collided = env.collided_during_step(state, a_av, v_ped, scenario.dt, geom)
            nxt = env.step(state, a_av, v_ped, scenario.dt)
            u_av = utility(state, a_av, v_ped, AV, w_av, geom, scenario.dt, collided)
            u_ped = utility(state, a_av, v_ped, PED, w_ped, geom, scenario.dt, collided)
            status = env.is_terminal(nxt, geom, scenario.horizon, collided)
            if AV in agents:
                agents[AV].observe(v_ped)
            if PED in agents:
                agents[PED].observe(a_av)
        except Exception as exc:  # noqa: BLE001 - re-raised with the step index
            raise EpisodeError(step, exc) from exc
        av_agent, ped_agent = agents.get(AV), agents.get(PED)
        records.append(StepRecord(
            step=step, state=nxt, utility_av=u_av, utility_ped=u_ped,
            av_level_belief=av_agent.level_belief.probs if av_agent else _nan_belief(k),
            av_lambda=av_agent.e_lambda if av_agent else math.nan,
            av_log_norm=av_agent.log_norm if av_agent else math.nan,
            ped_level_belief=ped_agent.level_belief.probs if ped_agent else _nan_belief(k),
            ped_lambda=ped_agent.e_lambda if ped_agent else math.nan,
            ped_log_norm=ped_agent.log_norm if ped_agent else math.nan,
            terminal=status))
        state = nxt
        states.append(state)
        step += 1
    av_agent, ped_agent = agents.get(AV), agents.get(PED)
    return SimulationTrace(
        scenario_id=scenario.scenario_id, seed=seed,
        config_hash=_config_hash(scenario, av, ped), dt=scenario.dt, k_max=k,
        initial_state=states[0],
        initial_av_lambda=scenario.agents.lambda_init if av_agent else math.nan,
        initial_ped_lambda=scenario.agents.lambda_init if ped_agent else math.nan,
        steps=tuple(records), horizon=scenario.horizon)


def _config_hash(scenario: ScenarioConfig, av: AgentSpec, ped: AgentSpec) -> str:
    import hashlib
    blob = f"{scenario.config_hash()}|{av!r}|{ped!r}"
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def scripted_pedestrian(speed: float) -> AgentSpec:
    return AgentSpec(kind="scripted", script=(float(speed),))


def run_case3_probe(scenario: ScenarioConfig, av: AgentSpec | None = None,
                    crossing_speed: float = 1.2, seed: int = 0) -> SimulationTrace:
    """Episode with the pedestrian scripted to walk at ``crossing_speed`` from t=0."""
    if crossing_speed not in pedestrian_action_set().values:
        raise ValueError(f"crossing_speed {crossing_speed} not in the pedestrian action set")
    return run_episode(scenario, av, scripted_pedestrian(crossing_speed), seed)
