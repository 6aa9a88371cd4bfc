"""Bandit decision policies behind one round-based interface.

Every policy exposes ``select() -> arm`` and ``update(arm, reward)``; the
round counter t equals 1 + total pulls.  A policy instance is single
threaded; distinct instances may run concurrently and share read-only
model sets.  Identical (seed, config, reward stream) always reproduce the
same action trace.

Registry keys: ``ucb``, ``ts``, ``m_ucb``, ``m_ts``, ``topm_ucb``,
``lob_ucb``, ``lob_ts``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteReward
from .orders import (
    StateModelSet,
    best_arm_of,
    empty_order,
    is_possibly_optimal,
)
from .projection import (
    EmpiricalStats,
    ProjectionResult,
    project_onto_model_set,
    projection_distance,
)

logger = logging.getLogger(__name__)


@dataclass
class PolicyConfig:
    """Shared knobs: c is the reward std used as confidence scale; t_proj
    is the period (in rounds) between projection recomputations."""

    c: float
    t_proj: int = 1
    models: StateModelSet | None = None

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.t_proj < 1:
            raise ValueError("t_proj must be >= 1")


def ucb_indices(means, counts, c: float, t) -> np.ndarray:
    """Index mu_a + sqrt(2 c^2 log t / N_a); unpulled arms get +inf."""
    counts = np.asarray(counts, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        bonus = np.sqrt(2.0 * c * c * math.log(t) / counts)
    bonus[counts == 0.0] = np.inf
    return np.asarray(means, dtype=float) + bonus


def state_log_posterior(stats: EmpiricalStats, mean_vectors, c: float) -> np.ndarray:
    """Log posterior over states under a uniform prior and Gaussian rewards:
    log p(s | D) = -sum_a N_a (mu_{s,a} - muhat_a)^2 / (2 c^2), normalized
    in log space so no mass can underflow to an all-zero posterior."""
    mean_vectors = np.asarray(mean_vectors, dtype=float)
    d = ((mean_vectors - stats.means) ** 2 * stats.counts).sum(axis=1)
    logp = -d / (2.0 * c * c)
    logp -= logp.max()
    logp -= math.log(np.exp(logp).sum())
    return logp


def _argmax_random_tie(rng: np.random.Generator, values: np.ndarray) -> int:
    ties = np.flatnonzero(values == values.max())
    if len(ties) == 1:
        return int(ties[0])
    return int(rng.choice(ties))


class Policy:
    """Base: empirical stats, a round counter and a private seeded rng."""

    key: str = ""

    def __init__(self, k: int, config: PolicyConfig, seed) -> None:
        self.k = k
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.stats = EmpiricalStats.zeros(k)
        self.round = 1

    def select(self) -> int:
        raise NotImplementedError

    def update(self, arm: int, reward: float) -> None:
        if not math.isfinite(reward):
            raise NonFiniteReward(f"reward for arm {arm} is {reward}")
        self.stats.update(arm, reward)
        self.round += 1

    def _needs_projection(self, stamp: int | None) -> bool:
        t_proj = self.config.t_proj
        return stamp is None or t_proj == 1 or self.round % t_proj == 1


class UcbPolicy(Policy):
    """Classical UCB with random tie-breaking (covers the cold start)."""

    key = "ucb"

    def select(self) -> int:
        idx = ucb_indices(self.stats.means, self.stats.counts, self.config.c, self.round)
        return _argmax_random_tie(self.rng, idx)


class GaussianTsPolicy(Policy):
    """Thompson sampling with conjugate Gaussian posteriors.

    Prior is N(0, c^2) per arm with observation noise c^2, so after n pulls
    the posterior is N(sum(r) / (n + 1), c^2 / (n + 1)); both follow
    directly from the pull stats, no extra state is kept.
    """

    key = "ts"

    def select(self) -> int:
        n = self.stats.counts
        post_mean = n * self.stats.means / (n + 1)
        post_std = self.config.c / np.sqrt(n + 1)
        draws = self.rng.normal(post_mean, post_std)
        return int(np.argmax(draws))


class StateMeansTsPolicy(Policy):
    """Samples a latent state from its posterior (known per-state means),
    then plays that state's best arm."""

    key = "m_ts"

    def __init__(self, k, config, seed):
        super().__init__(k, config, seed)
        if config.models is None or config.models.mean_vectors is None:
            raise ValueError("m_ts requires per-state mean vectors")
        self._means = config.models.mean_vectors

    def select(self) -> int:
        logp = state_log_posterior(self.stats, self._means, self.config.c)
        p = np.exp(logp)
        p /= p.sum()
        assert np.isfinite(p).all()
        s = int(self.rng.choice(len(p), p=p))
        return int(np.argmax(self._means[s]))


class StateMeansUcbPolicy(Policy):
    """Optimistic state elimination with known per-state means.

    A state is eliminated (permanently) once its count-weighted distance to
    the empirical means exceeds the concentration radius 6 c^2 k log t; the
    best arm of the surviving state with the highest optimum is played.
    Falls back to plain UCB if every state is eliminated.
    """

    key = "m_ucb"

    def __init__(self, k, config, seed):
        super().__init__(k, config, seed)
        if config.models is None or config.models.mean_vectors is None:
            raise ValueError("m_ucb requires per-state mean vectors")
        self._means = config.models.mean_vectors
        self._best_arm = np.argmax(self._means, axis=1)
        self._best_val = self._means.max(axis=1)
        self.alive = np.ones(len(self._means), dtype=bool)
        self._warned = False

    def select(self) -> int:
        radius = 6.0 * self.config.c**2 * self.k * math.log(self.round)
        d = ((self._means - self.stats.means) ** 2 * self.stats.counts).sum(axis=1)
        self.alive &= ~(d > radius)
        if not self.alive.any():
            if not self._warned:
                logger.warning("m_ucb: all states eliminated, falling back to ucb")
                self._warned = True
            idx = ucb_indices(self.stats.means, self.stats.counts, self.config.c, self.round)
            return _argmax_random_tie(self.rng, idx)
        vals = np.where(self.alive, self._best_val, -np.inf)
        return int(self._best_arm[int(np.argmax(vals))])


class TopArmsUcbPolicy(Policy):
    """UCB restricted to the arms optimal in at least one state (only when
    there are more arms than states)."""

    key = "topm_ucb"

    def __init__(self, k, config, seed):
        super().__init__(k, config, seed)
        if config.models is None:
            raise ValueError("topm_ucb requires state models")
        best = sorted({best_arm_of(order) for order in config.models.states})
        self._restricted = k > len(config.models.states)
        self._allowed = np.zeros(k, dtype=bool)
        self._allowed[best] = True

    def select(self) -> int:
        idx = ucb_indices(self.stats.means, self.stats.counts, self.config.c, self.round)
        if self._restricted:
            idx = np.where(self._allowed, idx, -np.inf)
        return _argmax_random_tie(self.rng, idx)


class OrderUcbPolicy(Policy):
    """UCB on means projected onto the closest state's order constraints.

    Arms merged by the projection pool their pull counts, shrinking the
    confidence term; with no active constraints this is exactly plain UCB.
    Projections refresh every t_proj rounds; pooled counts always use the
    current pulls over the cached blocks.
    """

    key = "lob_ucb"

    def __init__(self, k, config, seed):
        super().__init__(k, config, seed)
        if config.models is None:
            raise ValueError("lob_ucb requires state models")
        self._cache: ProjectionResult | None = None
        self._stamp: int | None = None

    def select(self) -> int:
        if self._needs_projection(self._stamp):
            self._cache = project_onto_model_set(self.stats, self.config.models)
            self._stamp = self.round
        pooled = self._cache.pooled_counts(self.stats.counts)
        idx = ucb_indices(self._cache.projected, pooled, self.config.c, self.round)
        return _argmax_random_tie(self.rng, idx)


class OrderTsPolicy(Policy):
    """Samples arms by an optimistic posterior that each arm is optimal.

    For arm a, d_a is the smallest count-weighted projection distance onto
    any state's constraint set intersected with "a is the best arm"
    (infeasible states skipped); sampling weights are proportional to
    exp(-d_a / (2 c^2)), computed in log space.  Distances refresh every
    t_proj rounds.  Exact pruning: a cone distance is never below the plain
    state distance nor below the best-arm-only distance, so candidates whose
    bounds exceed the current minimum are skipped without solving.
    """

    key = "lob_ts"

    def __init__(self, k, config, seed):
        super().__init__(k, config, seed)
        if config.models is None:
            raise ValueError("lob_ts requires state models")
        states = config.models.states
        self._feasible = [
            [s for s, o in enumerate(states) if is_possibly_optimal(o, a)]
            for a in range(k)
        ]
        assert any(self._feasible), "no arm is possibly optimal in any state"
        self._cones = [
            {s: states[s].cone(a) for s in self._feasible[a]} for a in range(k)
        ]
        no_order = empty_order(k)
        self._star = [no_order.cone(a) for a in range(k)]
        self._probs: np.ndarray | None = None
        self._stamp: int | None = None

    def _refresh(self) -> None:
        stats = self.stats
        states = self.config.models.states
        d_state = [projection_distance(stats, o) for o in states]
        d = np.full(self.k, np.inf)
        for a in range(self.k):
            candidates = sorted(self._feasible[a], key=lambda s: d_state[s])
            if not candidates:
                continue
            best = np.inf
            d_star = None
            for s in candidates:
                if d_state[s] >= best:
                    break
                if d_star is None and best < np.inf:
                    d_star = projection_distance(stats, self._star[a])
                if d_star is not None and d_star >= best:
                    break
                best = min(best, projection_distance(stats, self._cones[a][s]))
            d[a] = best
        finite = np.isfinite(d)
        assert finite.any(), "every arm dominated in every state"
        logp = np.full(self.k, -np.inf)
        logp[finite] = -d[finite] / (2.0 * self.config.c**2)
        logp -= logp[finite].max()
        p = np.exp(logp)
        p /= p.sum()
        self._probs = p
        self._stamp = self.round

    def select(self) -> int:
        if self._needs_projection(self._stamp):
            self._refresh()
        return int(self.rng.choice(self.k, p=self._probs))


POLICIES: dict[str, type[Policy]] = {
    cls.key: cls
    for cls in (
        UcbPolicy,
        GaussianTsPolicy,
        StateMeansTsPolicy,
        StateMeansUcbPolicy,
        TopArmsUcbPolicy,
        OrderUcbPolicy,
        OrderTsPolicy,
    )
}


def make_policy(key: str, k: int, config: PolicyConfig, seed) -> Policy:
    if key not in POLICIES:
        raise KeyError(f"unknown policy key {key!r}; known: {sorted(POLICIES)}")
    return POLICIES[key](k, config, seed)
