"""Exact weighted least-squares projection onto order-constrained sets.

Minimizes sum_a w_a (mu_a - muhat_a)^2 subject to the pairwise constraints
of a partial order, where w_a = max(N_a, 1e-12); zero-count arms get the
tiny weight so the minimizer stays unique while contributing nothing to the
reported distance (which is always recomputed with the true counts N_a).

Solver dispatch, all paths exact:
  * input already feasible        -> identity
  * disjoint chains (incl. total) -> pool-adjacent-violators per chain
  * one arm above all + chains    -> top-pool merge over per-chain PAVA blocks
  * general DAG                   -> recursive min-cut partitioning over
                                     integer-scaled residual capacities

All functions are pure; results are safe to share across threads.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyModelSet
from .orders import PartialOrder, StateModelSet

ZERO_COUNT_WEIGHT = 1e-12
BLOCK_VALUE_TOL = 1e-12
CAPACITY_SCALE = 10**9


@dataclass
class EmpiricalStats:
    """Per-arm pull counts and running means (mean is 0 while unpulled)."""

    counts: np.ndarray
    means: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.means = np.asarray(self.means, dtype=float)
        if self.counts.shape != self.means.shape or self.counts.ndim != 1:
            raise ValueError("counts and means must be equal-length vectors")
        if (self.counts < 0).any():
            raise ValueError("counts must be nonnegative")
        if not np.isfinite(self.means).all():
            raise ValueError("means must be finite")

    @classmethod
    def zeros(cls, k: int) -> "EmpiricalStats":
        return cls(np.zeros(k, dtype=np.int64), np.zeros(k))

    @property
    def k(self) -> int:
        return len(self.counts)

    @property
    def weights(self) -> np.ndarray:
        w = self.counts.astype(float)
        w[w == 0.0] = ZERO_COUNT_WEIGHT
        return w

    def update(self, arm: int, reward: float) -> None:
        n = self.counts[arm]
        self.means[arm] = (n * self.means[arm] + reward) / (n + 1)
        self.counts[arm] = n + 1

    def copy(self) -> "EmpiricalStats":
        return EmpiricalStats(self.counts.copy(), self.means.copy())


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    """Projected means, weighted squared distance, merged-block partition."""

    projected: np.ndarray
    distance: float
    blocks: tuple[tuple[int, ...], ...]
    state: int | None = None

    def pooled_counts(self, counts: np.ndarray) -> np.ndarray:
        """Per-arm sum of counts over the arm's block."""
        pooled = np.empty(len(counts), dtype=np.int64)
        for block in self.blocks:
            idx = list(block)
            pooled[idx] = counts[idx].sum()
        return pooled


def _pava_blocks(seq: Sequence[int], y: np.ndarray, w: np.ndarray) -> list[list]:
    """Pool adjacent violators along ``seq`` (constraint: nonincreasing).

    Returns blocks as [weight_sum, weighted_value_sum, members]; the fitted
    value of a block is its weighted mean, weighted_value_sum / weight_sum.
    """
    blocks: list[list] = []
    for i in seq:
        blocks.append([w[i], w[i] * y[i], [i]])
        while len(blocks) > 1:
            w2, s2, m2 = blocks[-1]
            w1, s1, m1 = blocks[-2]
            if s1 * w2 < s2 * w1:  # earlier value < later value: violation
                blocks.pop()
                blocks.pop()
                blocks.append([w1 + w2, s1 + s2, m1 + m2])
            else:
                break
    return blocks


def _solve_chains(y, w, chains) -> np.ndarray:
    fitted = y.copy()
    for chain in chains:
        if len(chain) == 1 or all(
            y[chain[j]] >= y[chain[j + 1]] for j in range(len(chain) - 1)
        ):
            continue
        for bw, bs, members in _pava_blocks(chain, y, w):
            fitted[list(members)] = bs / bw
    return fitted


def _solve_star(y, w, top: int, chains) -> np.ndarray:
    """Solve with ``top`` constrained above everything, rest disjoint chains.

    Each chain is solved by PAVA; blocks exceeding the top pool's running
    value are absorbed greedily in descending value order, which mirrors the
    adjacent-violator merge on the induced tree order.
    """
    fitted = y.copy()
    chain_blocks = [
        [[w[c[0]], w[c[0]] * y[c[0]], list(c)]] if len(c) == 1
        else _pava_blocks(c, y, w)
        for c in chains
    ]
    pool_w, pool_s = w[top], w[top] * y[top]
    pool_members = [top]
    heap: list[tuple[float, int, int]] = []
    for ci, blocks in enumerate(chain_blocks):
        if blocks:
            bw, bs, _ = blocks[0]
            heapq.heappush(heap, (-(bs / bw), ci, 0))
    while heap:
        neg_v, ci, bi = heap[0]
        if pool_s / pool_w >= -neg_v:
            break
        heapq.heappop(heap)
        bw, bs, bm = chain_blocks[ci][bi]
        pool_w += bw
        pool_s += bs
        pool_members.extend(bm)
        chain_blocks[ci][bi] = None
        if bi + 1 < len(chain_blocks[ci]):
            nw, ns, _ = chain_blocks[ci][bi + 1]
            heapq.heappush(heap, (-(ns / nw), ci, bi + 1))
    fitted[pool_members] = pool_s / pool_w
    for blocks in chain_blocks:
        for blk in blocks:
            if blk is not None:
                bw, bs, bm = blk
                fitted[list(bm)] = bs / bw
    return fitted


def _max_closure(nodes, edges, value) -> set[int]:
    """Max-weight subset of ``nodes`` closed so (a, b) in edges and b chosen
    imply a chosen.  ``value`` maps node -> int; solved as min-cut via
    Edmonds-Karp on arbitrary-precision integer capacities."""
    local = {node: i for i, node in enumerate(nodes)}
    n = len(nodes)
    source, sink = n, n + 1
    residual: list[dict[int, int]] = [dict() for _ in range(n + 2)]

    def add_edge(u, v, cap):
        residual[u][v] = residual[u].get(v, 0) + cap
        residual[v].setdefault(u, 0)

    inf = sum(abs(value[i]) for i in nodes) + 1
    for node in nodes:
        v = value[node]
        if v > 0:
            add_edge(source, local[node], v)
        elif v < 0:
            add_edge(local[node], sink, -v)
    for a, b in edges:
        add_edge(local[b], local[a], inf)

    while True:
        parent = {source: None}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            for v, cap in residual[u].items():
                if cap > 0 and v not in parent:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            break
        path = []
        v = sink
        while parent[v] is not None:
            path.append((parent[v], v))
            v = parent[v]
        bottleneck = min(residual[u][v] for u, v in path)
        for u, v in path:
            residual[u][v] -= bottleneck
            residual[v][u] += bottleneck

    side = {source}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v, cap in residual[u].items():
            if cap > 0 and v not in side:
                side.add(v)
                queue.append(v)
    return {node for node in nodes if local[node] in side}


def _solve_dag(y, w, order: PartialOrder) -> np.ndarray:
    """Recursive binary partitioning on violated mean constraints.

    Each step finds the constraint-closed subset with maximal residual mass
    above the block mean; a zero-gain cut certifies the block is a level set
    of the optimum.  Residuals are scaled to integers (base scale 1e9,
    enlarged while the smallest nonzero residual would round away, which
    keeps the tiny-weight placement of unpulled arms exact; capacities are
    arbitrary-precision ints, so no overflow).
    """
    fitted = np.empty(order.k)
    edges = order.reduction_edges
    stack: list[tuple[int, ...]] = [tuple(range(order.k))]
    while stack:
        nodes = stack.pop()
        if len(nodes) == 1:
            fitted[nodes[0]] = y[nodes[0]]
            continue
        nodeset = set(nodes)
        sub_edges = [(a, b) for a, b in edges if a in nodeset and b in nodeset]
        wsum = sum(w[i] for i in nodes)
        center = sum(w[i] * y[i] for i in nodes) / wsum
        residual = {i: w[i] * (y[i] - center) for i in nodes}
        smallest = min((abs(r) for r in residual.values() if r != 0.0), default=1.0)
        scale = CAPACITY_SCALE
        while smallest * scale < 1e6:
            scale *= 1000
        value = {i: round(residual[i] * scale) for i in nodes}
        high = _max_closure(nodes, sub_edges, value)
        gain = sum(value[i] for i in high)
        if high and len(high) < len(nodes) and gain > 0:
            stack.append(tuple(i for i in nodes if i in high))
            stack.append(tuple(i for i in nodes if i not in high))
        else:
            for i in nodes:
                fitted[i] = center
    return fitted


def _blocks_from_values(
    values: np.ndarray, order: PartialOrder, tol: float = BLOCK_VALUE_TOL
) -> tuple[tuple[int, ...], ...]:
    """Maximal constraint-connected sets of equal projected value."""
    parent = list(range(order.k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in order.reduction_edges:
        if abs(values[a] - values[b]) <= tol:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for a in range(order.k):
        groups.setdefault(find(a), []).append(a)
    return tuple(sorted(tuple(sorted(g)) for g in groups.values()))


def _fitted_values(y: np.ndarray, w: np.ndarray, order: PartialOrder) -> np.ndarray | None:
    """Dispatch to the matching exact solver; None means y is feasible."""
    ia, ib = order.edge_arrays
    if bool((y[ia] >= y[ib]).all()):
        return None
    if order.chains is not None:
        return _solve_chains(y, w, order.chains)
    if order.top_chains is not None:
        return _solve_star(y, w, order.universal_top, order.top_chains)
    return _solve_dag(y, w, order)


def project_onto_order(stats: EmpiricalStats, order: PartialOrder) -> ProjectionResult:
    """Exact minimizer of the count-weighted squared error over the order's
    constraint set, with merged blocks extracted."""
    if stats.k != order.k:
        raise DimensionMismatch(f"stats k={stats.k} but order k={order.k}")
    y = stats.means
    fitted = _fitted_values(y, stats.weights, order)
    if fitted is None:
        return ProjectionResult(y.copy(), 0.0, _blocks_from_values(y, order))
    distance = float(np.dot(stats.counts, (fitted - y) ** 2))
    return ProjectionResult(fitted, distance, _blocks_from_values(fitted, order))


def projection_distance(stats: EmpiricalStats, order: PartialOrder) -> float:
    """Count-weighted squared projection distance, skipping block
    extraction (the per-round cost driver of the sampling policy)."""
    if stats.k != order.k:
        raise DimensionMismatch(f"stats k={stats.k} but order k={order.k}")
    y = stats.means
    fitted = _fitted_values(y, stats.weights, order)
    if fitted is None:
        return 0.0
    return float(np.dot(stats.counts, (fitted - y) ** 2))


def project_onto_model_set(
    stats: EmpiricalStats, models: StateModelSet
) -> ProjectionResult:
    """Minimum-distance projection over all states; ties pick the lowest
    state index."""
    if len(models.states) == 0:
        raise EmptyModelSet("model set has no states")
    best: ProjectionResult | None = None
    for s, order in enumerate(models.states):
        result = project_onto_order(stats, order)
        if best is None or result.distance < best.distance:
            best = replace(result, state=s)
    return best


def project_onto_optimality_cone(
    stats: EmpiricalStats, order: PartialOrder, a: int
) -> ProjectionResult | None:
    """Projection onto the order further constrained so arm ``a`` is best.

    Returns None when the order already puts some arm strictly above ``a``
    (the cone is infeasible for this state).
    """
    cone = order.cone(a)
    if cone is None:
        return None
    return project_onto_order(stats, cone)
