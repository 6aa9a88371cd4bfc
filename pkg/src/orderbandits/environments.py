"""Reward-generating problem instances and the synthetic task generator.

A synthetic task samples m distinct total orders (permutations) of the k
arms; state s fixes means mu[p_j] = k*gamma - (j+1)*gamma along its
permutation, so adjacent gaps are exactly gamma and means lie inside the
state's constraint set by construction.  Rewards are Gaussian with shared
std sigma.  Each policy family sees a different slice of this prior: the
full orders plus mean vectors back the known-means baselines, while the
order-exploiting policies receive only ceil(q*(k-1)) revealed adjacent
relations per state.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TooManyStates
from .orders import PartialOrder, StateModelSet, TotalOrder, subsample_relations


@dataclass
class BanditInstance:
    """One problem instance: fixed means, reward noise and its own rng."""

    means: np.ndarray
    sigma: float
    true_state: int | None = None
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        if not np.isfinite(self.means).all():
            raise ValueError("means must be finite")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        self._best = float(self.means.max())
        self.rng = np.random.default_rng(self.seed)

    @property
    def k(self) -> int:
        return len(self.means)

    def fresh(self, seed: int | None = None) -> "BanditInstance":
        """A copy with a rewound (or replaced) reward stream."""
        return BanditInstance(
            self.means.copy(), self.sigma, self.true_state,
            self.seed if seed is None else seed,
        )

    def pull(self, arm: int) -> float:
        if not 0 <= arm < self.k:
            raise IndexError(f"arm {arm} out of range")
        return float(self.rng.normal(self.means[arm], self.sigma))

    def regret_of(self, arm: int) -> float:
        return self._best - float(self.means[arm])


@dataclass(frozen=True)
class SyntheticConfig:
    k: int
    m: int
    gamma: float = 1.0
    sigma: float = 1.0
    q: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must be positive")
        if self.gamma <= 0 or self.sigma <= 0:
            raise ValueError("gamma and sigma must be positive")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must be in [0, 1]")


def _child_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def child_seed(seed: int, *key: int) -> int:
    """Deterministic 64-bit stream seed derived from (seed, key)."""
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def _sample_distinct_permutations(k: int, m: int, rng: np.random.Generator):
    total = math.factorial(k)
    if m > total:
        raise TooManyStates(f"m={m} exceeds k!={total}")
    # rejection is fine while m << k!; enumerate outright for small k
    if k <= 7 and m > total // 2:
        universe = list(itertools.permutations(range(k)))
        chosen = rng.choice(total, size=m, replace=False)
        return [universe[int(i)] for i in chosen]
    seen: set[tuple[int, ...]] = set()
    perms = []
    while len(perms) < m:
        p = tuple(int(x) for x in rng.permutation(k))
        if p not in seen:
            seen.add(p)
            perms.append(p)
    return perms


def state_means(permutation, gamma: float) -> np.ndarray:
    """Means decreasing along the permutation: best arm (k-1)*gamma, worst 0."""
    k = len(permutation)
    means = np.empty(k)
    for j, arm in enumerate(permutation):
        means[arm] = k * gamma - (j + 1) * gamma
    return means


def generate_synthetic(
    config: SyntheticConfig, n_instances: int = 1
) -> tuple[StateModelSet, list[BanditInstance], StateModelSet]:
    """Build (full prior, instances, revealed prior) for one task draw.

    The full prior has every state's total order and mean vector; the
    revealed prior holds only the q-subsampled partial orders handed to the
    order-exploiting policies (those may be mutually compatible, so the
    strict-disagreement check is skipped for them).  Each instance draws a
    uniformly random true state.  Everything is a pure function of
    ``config.seed`` and ``n_instances``.
    """
    perm_rng = _child_rng(config.seed, 0)
    reveal_rng = _child_rng(config.seed, 1)
    state_rng = _child_rng(config.seed, 2)

    perms = _sample_distinct_permutations(config.k, config.m, perm_rng)
    totals = [TotalOrder(p) for p in perms]
    means = np.stack([state_means(p, config.gamma) for p in perms])
    full = StateModelSet([t.as_partial_order for t in totals], mean_vectors=means)

    revealed_orders: list[PartialOrder] = [
        subsample_relations(t, config.q, reveal_rng) for t in totals
    ]
    revealed = StateModelSet(revealed_orders, validate_incompatibility=False)

    instances = []
    for i in range(n_instances):
        s = int(state_rng.integers(config.m))
        instances.append(
            BanditInstance(
                means[s], config.sigma, true_state=s,
                seed=child_seed(config.seed, 3, i),
            )
        )
    return full, instances, revealed
