"""Partial and total orders over bandit arms.

A relation pair ``(a, b)`` always means "the mean of arm ``a`` is >= the mean
of arm ``b``".  Orders are immutable after construction; the reflexive
transitive closure is materialized as a dense boolean table so membership
tests are O(1) and structure analysis (chains, universal top) can be cached.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AmbiguousBestArm,
    CycleError,
    IncompatibleModelError,
    InsufficientData,
)


def _closure_of(adj: np.ndarray) -> np.ndarray:
    """Reflexive transitive closure of a boolean adjacency matrix."""
    k = adj.shape[0]
    reach = adj | np.eye(k, dtype=bool)
    while True:
        nxt = reach | ((reach.astype(np.uint8) @ reach.astype(np.uint8)) > 0)
        if np.array_equal(nxt, reach):
            return nxt
        reach = nxt


@dataclass(frozen=True, eq=False)
class PartialOrder:
    """A partial order of ``k`` arms with its materialized closure.

    ``relations`` is the generating set (reflexive pairs excluded);
    ``closure[a, b]`` is True iff a >= b can be inferred (diagonal included).
    """

    k: int
    relations: frozenset[tuple[int, int]]
    closure: np.ndarray

    def __post_init__(self):
        self.closure.setflags(write=False)

    def implies(self, a: int, b: int) -> bool:
        return bool(self.closure[a, b])

    @property
    def is_empty(self) -> bool:
        return not self.relations

    @cached_property
    def reduction_edges(self) -> tuple[tuple[int, int], ...]:
        """Transitive reduction: edges not implied by any 2+ step path."""
        strict = self.closure & ~np.eye(self.k, dtype=bool)
        two_step = (strict.astype(np.uint8) @ strict.astype(np.uint8)) > 0
        keep = strict & ~two_step
        return tuple((int(a), int(b)) for a, b in zip(*np.nonzero(keep)))

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Reduction edges as index arrays, for vectorized feasibility tests."""
        if self.reduction_edges:
            a, b = zip(*self.reduction_edges)
        else:
            a, b = (), ()
        return np.array(a, dtype=np.intp), np.array(b, dtype=np.intp)

    @cached_property
    def chains(self) -> tuple[tuple[int, ...], ...] | None:
        """Decomposition into disjoint chains (top first), or None.

        Singleton arms count as length-1 chains, so a non-None result covers
        all ``k`` arms.  Total orders come out as a single chain.
        """
        succ = {}
        pred = {}
        for a, b in self.reduction_edges:
            if a in succ or b in pred:
                return None
            succ[a] = b
            pred[b] = a
        chains = []
        for head in range(self.k):
            if head in pred:
                continue
            chain = [head]
            while chain[-1] in succ:
                chain.append(succ[chain[-1]])
            chains.append(tuple(chain))
        return tuple(chains)

    @cached_property
    def universal_top(self) -> int | None:
        """The arm that dominates every other arm, if one exists."""
        tops = np.flatnonzero(self.closure.all(axis=1))
        return int(tops[0]) if tops.size else None

    @cached_property
    def top_chains(self) -> tuple[tuple[int, ...], ...] | None:
        """Chains of the suborder below ``universal_top``, or None.

        Non-None means the order is a "star of chains": one arm above all
        others, with the remainder decomposing into disjoint chains.
        """
        top = self.universal_top
        if top is None:
            return None
        rest = [a for a in range(self.k) if a != top]
        sub = self.closure[np.ix_(rest, rest)]
        sub_order = PartialOrder(self.k - 1, frozenset(), sub)
        sub_chains = sub_order.chains
        if sub_chains is None:
            return None
        return tuple(tuple(rest[i] for i in chain) for chain in sub_chains)

    @cached_property
    def _cone_cache(self) -> dict:
        return {}

    def cone(self, a: int) -> "PartialOrder | None":
        """This order with arm ``a`` forced above all others.

        Returns None when some other arm already dominates ``a`` (the
        augmentation would create a cycle).  Results are cached per arm.
        """
        if a in self._cone_cache:
            return self._cone_cache[a]
        if not is_possibly_optimal(self, a):
            result = None
        else:
            extra = {(a, b) for b in range(self.k) if b != a}
            result = build_partial_order(self.k, set(self.relations) | extra)
        self._cone_cache[a] = result
        return result


def build_partial_order(k: int, relations: Iterable[tuple[int, int]]) -> PartialOrder:
    """Build a PartialOrder from any generating relation set.

    Raises CycleError if the closure would relate two distinct arms in both
    directions, IndexError for out-of-range arm indices.
    """
    adj = np.zeros((k, k), dtype=bool)
    clean = set()
    for a, b in relations:
        if not (0 <= a < k and 0 <= b < k):
            raise IndexError(f"arm pair ({a}, {b}) out of range for k={k}")
        if a == b:
            continue
        clean.add((int(a), int(b)))
        adj[a, b] = True
    closure = _closure_of(adj)
    both = closure & closure.T & ~np.eye(k, dtype=bool)
    if both.any():
        a, b = map(int, np.argwhere(both)[0])
        raise CycleError(f"relations imply both {a}>={b} and {b}>={a}")
    return PartialOrder(k, frozenset(clean), closure)


def empty_order(k: int) -> PartialOrder:
    return build_partial_order(k, ())


@dataclass(frozen=True)
class TotalOrder:
    """A full sort of the arms, best arm first."""

    permutation: tuple[int, ...]

    def __post_init__(self):
        k = len(self.permutation)
        if sorted(self.permutation) != list(range(k)):
            raise ValueError(f"not a permutation of [0, {k}): {self.permutation}")

    @property
    def k(self) -> int:
        return len(self.permutation)

    @property
    def best_arm(self) -> int:
        return self.permutation[0]

    @cached_property
    def adjacent_relations(self) -> tuple[tuple[int, int], ...]:
        p = self.permutation
        return tuple((p[j], p[j + 1]) for j in range(len(p) - 1))

    @cached_property
    def as_partial_order(self) -> PartialOrder:
        return build_partial_order(self.k, self.adjacent_relations)


def subsample_relations(
    order: TotalOrder, q: float, rng: np.random.Generator
) -> PartialOrder:
    """Reveal ceil(q*(k-1)) of the adjacent relations, chosen uniformly."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    n_adjacent = order.k - 1
    n_keep = math.ceil(q * n_adjacent)
    chosen = rng.choice(n_adjacent, size=n_keep, replace=False) if n_keep else []
    kept = [order.adjacent_relations[int(j)] for j in sorted(chosen)]
    return build_partial_order(order.k, kept)


def is_possibly_optimal(order: PartialOrder, a: int) -> bool:
    """True iff no other arm sits strictly above ``a`` in the closure."""
    if not 0 <= a < order.k:
        raise IndexError(f"arm {a} out of range for k={order.k}")
    return int(order.closure[:, a].sum()) == 1


def best_arm_of(order: PartialOrder) -> int:
    """The unique arm the order puts above all others.

    Raises AmbiguousBestArm when zero or several arms could be optimal; in a
    finite poset a unique maximal element dominates every arm.
    """
    candidates = [a for a in range(order.k) if is_possibly_optimal(order, a)]
    if len(candidates) != 1:
        raise AmbiguousBestArm(
            f"order admits {len(candidates)} possibly-optimal arms: {candidates}"
        )
    return candidates[0]


def collision_probability(k: int) -> Fraction:
    """Chance two distinct uniform random total orders differ in exactly
    two positions: C(k, 2) / (k! - 1), as an exact rational."""
    if k < 2:
        raise ValueError("k must be >= 2")
    return Fraction(math.comb(k, 2), math.factorial(k) - 1)


def min_samples_for_identification(
    sigma: float, delta_gap: float, k: int, n_instances: int, confidence_delta: float
) -> int:
    """Per-arm pull count guaranteeing all instance orders are recovered

    with probability at least 1 - confidence_delta, clamped to >= 1:
    ceil(2 * (sigma/delta_gap)^2 * log(2*k*n_instances / confidence_delta)).
    """
    if min(sigma, delta_gap, k, n_instances) <= 0:
        raise ValueError("sigma, delta_gap, k, n_instances must be positive")
    if not 0.0 < confidence_delta < 1.0:
        raise ValueError("confidence_delta must be in (0, 1)")
    bound = 2.0 * (sigma / delta_gap) ** 2 * math.log(2.0 * k * n_instances / confidence_delta)
    return max(1, math.ceil(bound))


def estimate_state_orders(
    histories: Sequence[Sequence[tuple[int, float]]],
    min_count: int,
    k: int | None = None,
) -> list[TotalOrder]:
    """Per-instance empirical-mean sort, deduplicated across instances.

    Ties in empirical means break toward the lower arm index.  Raises
    InsufficientData when some (instance, arm) pair has fewer than
    ``min_count`` pulls.  ``k`` defaults to 1 + the largest arm index seen.
    """
    if k is None:
        k = 1 + max(a for hist in histories for a, _ in hist)
    seen: list[TotalOrder] = []
    seen_perms: set[tuple[int, ...]] = set()
    for i, hist in enumerate(histories):
        counts = np.zeros(k, dtype=np.int64)
        sums = np.zeros(k)
        for a, r in hist:
            counts[a] += 1
            sums[a] += r
        if (counts < min_count).any():
            a = int(np.argmin(counts))
            raise InsufficientData(
                f"instance {i}, arm {a}: {counts[a]} < min_count={min_count}"
            )
        means = sums / counts
        perm = tuple(sorted(range(k), key=lambda a: (-means[a], a)))
        if perm not in seen_perms:
            seen_perms.add(perm)
            seen.append(TotalOrder(perm))
    return seen


def _strictly_disagree(p: PartialOrder, q: PartialOrder) -> bool:
    """Some pair of arms is strictly ordered oppositely by p and q."""
    both = p.closure & q.closure.T & ~np.eye(p.k, dtype=bool)
    return bool(both.any())


class StateModelSet:
    """The agent's prior: one partial order per latent state.

    Optional per-state mean vectors back the baselines that assume fully
    known state parameters.  By default construction rejects any pair of
    states whose orders never strictly disagree; subsampled (revealed)
    orders may legitimately be compatible, so that check can be disabled.
    """

    def __init__(
        self,
        states: Sequence[PartialOrder],
        mean_vectors: np.ndarray | Sequence[Sequence[float]] | None = None,
        validate_incompatibility: bool = True,
    ):
        if not states:
            raise ValueError("at least one state is required")
        k = states[0].k
        for s, order in enumerate(states):
            if order.k != k:
                raise ValueError(f"state {s} has k={order.k}, expected {k}")
        if validate_incompatibility:
            for s in range(len(states)):
                for s2 in range(s + 1, len(states)):
                    if not _strictly_disagree(states[s], states[s2]):
                        raise IncompatibleModelError(
                            f"states {s} and {s2} never strictly disagree"
                        )
        if mean_vectors is not None:
            mean_vectors = np.asarray(mean_vectors, dtype=float)
            if mean_vectors.shape != (len(states), k):
                raise ValueError(
                    f"mean_vectors shape {mean_vectors.shape} != ({len(states)}, {k})"
                )
            for s, order in enumerate(states):
                for a, b in order.relations:
                    if mean_vectors[s, a] < mean_vectors[s, b] - 1e-9:
                        raise ValueError(
                            f"state {s} means violate its own order on ({a}, {b})"
                        )
            mean_vectors.setflags(write=False)
        self.states = tuple(states)
        self.mean_vectors = mean_vectors

    @property
    def k(self) -> int:
        return self.states[0].k

    @property
    def m(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)


# Line-oriented text format for state orders, consumed by the CLI:
#   arms <k>
#   state <id>: a>b, b>c
# Only generating relations are stored; the loader recomputes closures.

_STATE_LINE = re.compile(r"^state\s+(\d+)\s*:\s*(.*)$")


def dump_state_orders(orders: Sequence[PartialOrder]) -> str:
    lines = [f"arms {orders[0].k}"]
    for s, order in enumerate(orders):
        pairs = ", ".join(f"{a}>{b}" for a, b in sorted(order.relations))
        lines.append(f"state {s}: {pairs}".rstrip())
    return "\n".join(lines) + "\n"


def parse_state_orders(text: str) -> list[PartialOrder]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("arms "):
        raise ValueError("state file must start with an 'arms <k>' line")
    k = int(lines[0].split()[1])
    orders = []
    for ln in lines[1:]:
        match = _STATE_LINE.match(ln)
        if match is None:
            raise ValueError(f"unparseable state line: {ln!r}")
        relations = []
        body = match.group(2).strip()
        if body:
            for pair in body.split(","):
                a, b = pair.strip().split(">")
                relations.append((int(a), int(b)))
        orders.append(build_partial_order(k, relations))
    return orders


def save_state_orders(orders: Sequence[PartialOrder], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_state_orders(orders))


def load_state_orders(path) -> list[PartialOrder]:
    with open(path, encoding="utf-8") as fh:
        return parse_state_orders(fh.read())
