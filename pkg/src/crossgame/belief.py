"""Bayesian updating of beliefs about the opponent's reasoning level and rationality.

The rationality posterior stays inside the conjugate family

    f(lam) ~ exp(lam * Q) / prod_obs sum_l exp(lam * q_obs[l])

on ``[0, lambda_max]``, where ``Q`` sums the payoffs of the actions the
opponent actually chose and each observation keeps its own payoff vector.
Observing one more action only appends to these parameters.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numba import njit
from scipy import integrate, optimize


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class LevelBelief:
    probs: tuple[float, ...]
    degenerate: bool = False  # last update saw all-zero evidence and kept the prior

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"level belief must be a simplex, got {self.probs!r}")
        object.__setattr__(self, "probs", tuple(float(u) for u in p))

    @classmethod
    def uniform(cls, n: int) -> "LevelBelief":
        return cls(tuple([1.0 / n] * n))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs)

    @property
    def most_likely(self) -> int:
        return int(np.argmax(self.probs))


def match_observed_action(predicted, observed: float) -> int:
    """Index of the predicted action nearest to ``observed``; ties go to the lower index."""
    if not math.isfinite(observed):
        raise ValueError(f"observed action must be finite, got {observed!r}")
    values = np.asarray(getattr(predicted, "values", predicted), dtype=np.float64)
    if values.size == 0:
        raise ValueError("predicted action set is empty")
    return int(np.argmin(np.abs(values - observed)))


def action_likelihoods_from_policies(level_policies: Sequence, observed_index: int) -> np.ndarray:
    """Probability each opponent level assigned to the observed action."""
    return np.array([float(p.probs[observed_index]) for p in level_policies])


def update_level_belief(prior: LevelBelief, likelihoods) -> LevelBelief:
    """Bayes rule over levels; all-zero evidence returns the prior flagged ``degenerate``."""
    lik = np.asarray(likelihoods, dtype=np.float64)
    p = prior.as_array()
    if lik.shape != p.shape:
        raise ValueError("likelihoods and prior differ in length")
    if np.any(lik < 0) or np.any(lik > 1) or not np.all(np.isfinite(lik)):
        raise ValueError("likelihoods must lie in [0, 1]")
    joint = lik * p
    total = joint.sum()
    if not total > 0:
        return LevelBelief(prior.probs, degenerate=True)
    post = joint / total
    # exact renormalization so the simplex check holds at 1e-12
    post[-1] = max(0.0, 1.0 - post[:-1].sum())
    return LevelBelief(tuple(post / post.sum()))


def _logsumexp_rows(lam: np.ndarray, vectors: np.ndarray, mask: np.ndarray,
                    row_max: np.ndarray) -> np.ndarray:
    """``sum_rows log sum_j exp(lam * v_rj)`` for each lam (lam >= 0), shape ``lam.shape``."""
    lam = np.asarray(lam, dtype=np.float64)
    flat = lam.reshape(-1)
    z = flat[:, None, None] * (vectors - row_max[:, None])[None]
    s = np.log(np.sum(np.exp(z) * mask[None], axis=2))
    total = (flat[:, None] * row_max[None] + s).sum(axis=1)
    return total.reshape(lam.shape)


@njit(cache=True)
def _log_density_scalar(lam, q_total, mat, mask, row_max):
    out = lam * q_total
    for r in range(mat.shape[0]):
        acc = 0.0
        for j in range(mat.shape[1]):
            if mask[r, j] > 0.0:
                acc += math.exp(lam * (mat[r, j] - row_max[r]))
        out -= lam * row_max[r] + math.log(acc)
    return out


@dataclass(frozen=True)
class LambdaPosterior:
    """Parameters of the truncated conjugate density over the opponent's rationality.

    ``prior_pseudo`` is an optional ``(chosen, vector)`` pseudo-observation
    that shapes the prior; it enters the density but not ``q_sum``,
    ``level_counts`` or ``observations``.
    """

    q_sum: float = 0.0
    level_counts: tuple[int, ...] = (0, 0, 0)
    observations: tuple[tuple[float, ...], ...] = ()
    lambda_max: float = 100.0
    prior_pseudo: tuple[float, tuple[float, ...]] | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.lambda_max > 0:
            raise ValueError("lambda_max must be > 0")
        if sum(self.level_counts) != len(self.observations):
            raise ValueError("level_counts must sum to the number of observations")

    @classmethod
    def flat(cls, k_max: int = 2, lambda_max: float = 100.0) -> "LambdaPosterior":
        return cls(0.0, (0,) * (k_max + 1), (), lambda_max)

    def _terms(self):
        if "terms" not in self._cache:
            vecs = list(self.observations)
            q_total = self.q_sum
            if self.prior_pseudo is not None:
                q_total += self.prior_pseudo[0]
                vecs.append(tuple(self.prior_pseudo[1]))
            if vecs:
                width = max(len(v) for v in vecs)
                row_max = np.array([max(v) for v in vecs])
                mat = np.repeat(row_max[:, None], width, axis=1)
                mask = np.zeros((len(vecs), width))
                for i, v in enumerate(vecs):
                    mat[i, :len(v)] = v
                    mask[i, :len(v)] = 1.0
            else:
                mat = mask = np.zeros((0, 1))
                row_max = np.zeros(0)
            self._cache["terms"] = (q_total, mat, mask, row_max)
        return self._cache["terms"]

    def log_density(self, lam) -> np.ndarray:
        """Unnormalized log density at ``lam`` (array-valued)."""
        q_total, mat, mask, row_max = self._terms()
        lam = np.asarray(lam, dtype=np.float64)
        out = lam * q_total
        if mat.shape[0]:
            out = out - _logsumexp_rows(lam, mat, mask, row_max)
        return out

    def log_density_at(self, lam: float) -> float:
        q_total, mat, mask, row_max = self._terms()
        return _log_density_scalar(float(lam), q_total, mat, mask, row_max)

    def _slope(self, lam: float) -> float:
        """Derivative of the log density; non-increasing because the log density is concave."""
        q_total, mat, mask, row_max = self._terms()
        if not mat.shape[0]:
            return q_total
        z = lam * (mat - row_max[:, None])
        w = np.exp(z) * mask
        w /= w.sum(axis=1, keepdims=True)
        return q_total - float(np.sum(w * mat))

    def mode(self) -> float:
        lo, hi = 0.0, self.lambda_max
        if self._slope(lo) <= 0:
            return lo
        if self._slope(hi) >= 0:
            return hi
        return float(optimize.brentq(self._slope, lo, hi, xtol=1e-12, rtol=1e-12))

    @property
    def n_observations(self) -> int:
        return len(self.observations)


def observe_action(posterior: LambdaPosterior, chosen_payoff: float, payoff_vector,
                   k: int) -> LambdaPosterior:
    """Append one observation at level ``k``: a pure parameter update."""
    vec = tuple(float(u) for u in payoff_vector)
    if not vec or not all(math.isfinite(u) for u in vec) or not math.isfinite(chosen_payoff):
        raise ValueError("payoffs must be finite and non-empty")
    if not any(u == chosen_payoff for u in vec):
        raise ValueError("chosen_payoff must be one of the payoff_vector entries")
    counts = list(posterior.level_counts)
    counts[k] += 1
    return replace(posterior, q_sum=posterior.q_sum + float(chosen_payoff),
                   level_counts=tuple(counts),
                   observations=posterior.observations + (vec,), _cache={})


@dataclass(frozen=True)
class LambdaSummary:
    mean: float
    log_normalizer: float


def lambda_summary(posterior: LambdaPosterior, quadrature_tol: float = 1e-10,
                   limit: int = 200) -> LambdaSummary:
    """Posterior mean and log normalizer by adaptive quadrature in log space.

    The integrand is ``exp(log f - log f(mode))``; the panel is split at the
    mode so the peak is never straddled.
    """
    mode = posterior.mode()
    log_peak = posterior.log_density_at(mode)
    lam_max = posterior.lambda_max
    q_total, mat, mask, row_max = posterior._terms()

    def g(lam):
        return math.exp(_log_density_scalar(lam, q_total, mat, mask, row_max) - log_peak)

    def lg(lam):
        return lam * g(lam)

    points = [mode] if 0.0 < mode < lam_max else None
    results = []
    for fn in (g, lg):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            out = integrate.quad(fn, 0.0, lam_max, points=points, epsabs=0.0,
                                 epsrel=quadrature_tol, limit=limit, full_output=1)
        if len(out) > 3 and out[2].get("last", 0) >= limit:
            raise QuadratureError(f"quadrature exceeded {limit} panels: {out[3]}")
        results.append(out[0])
    z, m1 = results
    if not z > 0:
        raise QuadratureError("posterior normalizer underflowed")
    return LambdaSummary(mean=m1 / z, log_normalizer=log_peak + math.log(z))


def expected_lambda(posterior: LambdaPosterior, quadrature_tol: float = 1e-10) -> float:
    return lambda_summary(posterior, quadrature_tol).mean


@functools.lru_cache(maxsize=64)
def calibrated_prior(target_mean: float = 10.0, k_max: int = 2,
                     lambda_max: float = 100.0) -> LambdaPosterior:
    """Flat prior times one pseudo-observation ``[c, 0]`` choosing ``c``, tuned to ``target_mean``.

    ``c < 0`` makes the pseudo-evidence favor low rationality, which is what
    drags the flat prior's mean of ``lambda_max / 2`` down to the target.
    """
    base = LambdaPosterior.flat(k_max, lambda_max)
    if not 0 < target_mean < lambda_max:
        raise ValueError("target_mean must lie in (0, lambda_max)")
    if math.isclose(target_mean, lambda_max / 2):
        return base

    def gap(c):
        return expected_lambda(replace(base, prior_pseudo=(c, (c, 0.0)), _cache={})) - target_mean

    lo, hi = (-1e3, -1e-9) if target_mean < lambda_max / 2 else (1e-9, 1e3)
    c = optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14)
    return replace(base, prior_pseudo=(c, (c, 0.0)), _cache={})


@dataclass(frozen=True)
class BeliefUpdate:
    level_belief: LevelBelief
    posterior: LambdaPosterior
    expected_lambda: float
    log_normalizer: float
    inferred_level: int


def belief_update(level_belief: LevelBelief, posterior: LambdaPosterior,
                  opponent_levels: Sequence, observed_index: int,
                  quadrature_tol: float = 1e-10) -> BeliefUpdate:
    """One full round: level belief first, then the rationality posterior at the likeliest level.

    ``opponent_levels[k]`` is the opponent's level-k policy (with its
    q-values) for k over the belief's support.
    """
    lik = action_likelihoods_from_policies(opponent_levels, observed_index)
    new_belief = update_level_belief(level_belief, lik)
    k = new_belief.most_likely
    q = opponent_levels[k].q
    new_post = observe_action(posterior, float(q[observed_index]), q, k)
    summary = lambda_summary(new_post, quadrature_tol)
    return BeliefUpdate(new_belief, new_post, summary.mean, summary.log_normalizer, k)
