"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s``.  Criteria with a runtime
target also print their elapsed time.  Statistical margins use two combined
standard errors, sqrt(se_a^2 + se_b^2).
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from oracle_qp import blocks_of, qp_project
from ml_fixture import write_fixture
from orderbandits.bounds import lower_bound_constant, theoretical_upper_bound
from orderbandits.environments import SyntheticConfig, generate_synthetic
from orderbandits.harness import (
    emit_results,
    parse_config,
    play,
    resolved_config_dict,
    run_experiment,
)
from orderbandits.movielens import prepare_movielens
from orderbandits.orders import (
    TotalOrder,
    best_arm_of,
    build_partial_order,
    collision_probability,
    subsample_relations,
)
from orderbandits.policies import PolicyConfig, make_policy
from orderbandits.projection import EmpiricalStats, project_onto_order


def report(num: int, name: str, ok: bool, detail: str, started: float) -> None:
    verdict = "PASS" if ok else "FAIL"
    print(f"\n[criterion {num:2d}] {name}: {verdict} ({detail}) [{time.time() - started:.1f}s]")


def combined_se(a: float, b: float) -> float:
    return math.hypot(a, b)


def synthetic_run(policies, seed, *, k, m, q, gamma, sigma, T, N, t_proj=None):
    raw = {
        "environment": {"type": "synthetic", "k": k, "m": m, "gamma": gamma,
                        "sigma": sigma, "q": q},
        "policies": policies,
        "T": T, "N": N, "seed": seed,
    }
    if t_proj is not None:
        raw["t_proj"] = t_proj
    _, summary = run_experiment(parse_config(raw))
    return {row.policy: row for row in summary}


def test_criterion_1_projection_oracle_equivalence():
    started = time.time()
    rng = np.random.default_rng(314159)
    worst = 0.0
    block_mismatches = 0
    for case in range(1000):
        k = int(rng.integers(2, 7))
        kind = case % 4
        if kind == 0:
            perm = rng.permutation(k)
            rank = np.empty(k, dtype=int)
            rank[perm] = np.arange(k)
            pairs = [(a, b) for a in range(k) for b in range(k) if rank[a] < rank[b]]
            n_edges = int(rng.integers(0, min(9, len(pairs)) + 1))
            idx = rng.choice(len(pairs), size=n_edges, replace=False) if n_edges else []
            rels = frozenset(pairs[int(i)] for i in idx)
        elif kind == 1:
            rels = frozenset(TotalOrder(tuple(int(x) for x in rng.permutation(k))).adjacent_relations)
        elif kind == 2:
            t = TotalOrder(tuple(int(x) for x in rng.permutation(k)))
            rels = frozenset(subsample_relations(t, float(rng.uniform(0, 1)), rng).relations)
        else:
            t = TotalOrder(tuple(int(x) for x in rng.permutation(k)))
            base = subsample_relations(t, float(rng.uniform(0, 1)), rng)
            tops = [a for a in range(k) if base.closure[:, a].sum() == 1]
            a = int(rng.choice(tops))
            rels = frozenset(base.relations) | {(a, b) for b in range(k) if b != a}
        order = build_partial_order(k, rels)
        counts = rng.integers(0, 40, size=k)
        means = np.where(counts > 0, rng.normal(0, 3, size=k), 0.0)
        stats = EmpiricalStats(counts, means)
        res = project_onto_order(stats, order)
        oracle_vals, oracle_obj = qp_project(stats.means, stats.weights, rels, k)
        lib_obj = float(np.dot(stats.weights, (res.projected - stats.means) ** 2))
        worst = max(worst, abs(lib_obj - oracle_obj))
        if res.blocks != blocks_of(oracle_vals, rels, k):
            block_mismatches += 1
    elapsed = time.time() - started
    ok = worst <= 1e-8 and block_mismatches == 0 and elapsed < 60
    report(1, "projection oracle equivalence", ok,
           f"1000 cases, max distance gap {worst:.2e}, "
           f"{block_mismatches} block mismatches", started)
    assert worst <= 1e-8
    assert block_mismatches == 0
    assert elapsed < 60


def test_criterion_2_combinatorics_exactness():
    started = time.time()
    known = collision_probability(10) == Fraction(45, 3_628_799)
    brute_ok = True
    for k in range(2, 7):
        hits = total = 0
        for p1, p2 in itertools.permutations(itertools.permutations(range(k)), 2):
            total += 1
            hits += sum(a != b for a, b in zip(p1, p2)) == 2
        brute_ok &= collision_probability(k) == Fraction(hits, total)
    elapsed = time.time() - started
    ok = known and brute_ok and elapsed < 10
    report(2, "collision probability exactness", ok,
           f"k=10 exact: {known}, brute force k=2..6: {brute_ok}", started)
    assert known and brute_ok
    assert elapsed < 10


def test_criterion_3_lob_ucb_reversion():
    # engineered case where the empirical means satisfy every revealed state
    # order at every round: no relations are revealed (q=0) and rewards are
    # effectively noiseless, so no projection ever moves a mean
    started = time.time()
    cfg = SyntheticConfig(k=10, m=5, gamma=1.0, sigma=1e-12, q=0.0, seed=42)
    _, (inst,), revealed = generate_synthetic(cfg)
    a_ucb, _ = play(make_policy("ucb", 10, PolicyConfig(c=1.0), seed=7),
                    inst.fresh(), 500)
    a_lob, _ = play(
        make_policy("lob_ucb", 10, PolicyConfig(c=1.0, models=revealed), seed=7),
        inst.fresh(), 500,
    )
    identical = bool(np.array_equal(a_ucb, a_lob))
    report(3, "lob_ucb reverts to ucb", identical,
           f"500-round traces identical: {identical}", started)
    assert identical


def test_criterion_4_structure_benefit():
    started = time.time()
    rows = synthetic_run(["ucb", "ts", "lob_ucb", "lob_ts"], seed=2024,
                         k=15, m=10, q=1.0, gamma=1.0, sigma=5.0, T=500, N=100)
    ts_margin = rows["ts"].mean_cum_regret - rows["lob_ts"].mean_cum_regret
    ts_need = 2 * combined_se(rows["ts"].se, rows["lob_ts"].se)
    ucb_margin = rows["ucb"].mean_cum_regret - rows["lob_ucb"].mean_cum_regret
    ucb_need = 2 * combined_se(rows["ucb"].se, rows["lob_ucb"].se)
    elapsed = time.time() - started
    ok = ts_margin >= ts_need and ucb_margin >= ucb_need and elapsed < 600
    report(4, "structure benefit at q=1", ok,
           f"lob_ts {rows['lob_ts'].mean_cum_regret:.0f} vs ts "
           f"{rows['ts'].mean_cum_regret:.0f} (margin {ts_margin:.0f} >= {ts_need:.0f}); "
           f"lob_ucb {rows['lob_ucb'].mean_cum_regret:.0f} vs ucb "
           f"{rows['ucb'].mean_cum_regret:.0f} (margin {ucb_margin:.0f} >= {ucb_need:.0f})",
           started)
    assert ts_margin >= ts_need
    assert ucb_margin >= ucb_need
    assert elapsed < 600


def test_criterion_5_constraint_fraction_sweep():
    started = time.time()
    values = {}
    for q in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        policies = ["lob_ts", "ts"] if q == 0.0 else ["lob_ts"]
        rows = synthetic_run(policies, seed=2024, k=15, m=10, q=q,
                             gamma=1.0, sigma=5.0, T=500, N=100)
        values[q] = rows["lob_ts"]
        if q == 0.0:
            values["ts"] = rows["ts"]
    sweep = ", ".join(f"q={q}: {values[q].mean_cum_regret:.0f}" for q in
                      (0.0, 0.2, 0.4, 0.6, 0.8, 1.0))
    print(f"\n  lob_ts sweep: {sweep}; ts: {values['ts'].mean_cum_regret:.0f}")
    drop = values[0.0].mean_cum_regret - values[1.0].mean_cum_regret
    drop_need = 2 * combined_se(values[0.0].se, values[1.0].se)
    gap_ts = abs(values[0.0].mean_cum_regret - values["ts"].mean_cum_regret)
    gap_need = 2 * combined_se(values[0.0].se, values["ts"].se)
    elapsed = time.time() - started
    ok = drop >= drop_need and gap_ts <= gap_need and elapsed < 1800
    report(5, "constraint-fraction monotonicity", ok,
           f"q=1 below q=0 by {drop:.0f} (need >= {drop_need:.0f}); "
           f"q=0 vs ts gap {gap_ts:.0f} (need <= {gap_need:.0f})", started)
    assert drop >= drop_need
    # Known-red clause: with the optimistic-likelihood sampler defined by the
    # algorithm, an unconstrained prior explores more than conjugate Gaussian
    # TS at this horizon, so the two are distinguishable at q=0.
    assert gap_ts <= gap_need
    assert elapsed < 1800


def test_criterion_6_sublinearity_and_bound_dominance():
    started = time.time()
    dominated = halved = used = 0
    seed = 0
    while used < 50:
        cfg = SyntheticConfig(k=5, m=4, gamma=1.0, sigma=1.0, q=1.0, seed=seed)
        seed += 1
        full, (inst,), revealed = generate_synthetic(cfg)
        heads = [best_arm_of(order) for order in full.states]
        if len(set(heads)) < len(heads):
            continue  # a state shares the best arm: the bound degenerates
        used += 1
        bound = theoretical_upper_bound(inst, full, T=4000, sigma=1.0)
        pol = make_policy("lob_ucb", 5, PolicyConfig(c=1.0, models=revealed), seed=seed)
        _, regret = play(pol, inst.fresh(), 4000)
        cum = np.cumsum(regret)
        dominated += cum[-1] <= bound
        halved += (cum[-1] / 4000) < 0.5 * (cum[499] / 500)
    elapsed = time.time() - started
    ok = dominated == 50 and halved >= 45 and elapsed < 900
    report(6, "sublinearity and bound dominance", ok,
           f"bound dominates on {dominated}/50 runs, "
           f"rate halves on {halved}/50 (need >= 45)", started)
    assert dominated == 50
    assert halved >= 45
    assert elapsed < 900


def test_criterion_7_lower_bound_ordering():
    started = time.time()
    violations = []
    for i in range(20):
        k = 2 + (i % 2)
        m = 2 if k == 2 else 2 + (i % 2)
        cfg = SyntheticConfig(k=k, m=m, gamma=1.0, sigma=1.0, seed=100 + i)
        full, (inst,), _ = generate_synthetic(cfg)
        lb = lower_bound_constant(inst, "lb", full, max_refinements=0)
        lob = lower_bound_constant(inst, "lob", full, max_refinements=0)
        mab = lower_bound_constant(inst, "mab", full, max_refinements=0)
        if not (lb <= lob + 1e-9 and lob <= mab + 1e-9):
            violations.append((i, lb, lob, mab))
    elapsed = time.time() - started
    ok = not violations and elapsed < 300
    report(7, "lower bound ordering lb <= lob <= mab", ok,
           f"20 instances, {len(violations)} violations", started)
    assert not violations
    assert elapsed < 300


def test_criterion_8_misspecification_robustness(tmp_path):
    started = time.time()
    ratings, movies, _ = write_fixture(tmp_path, seed=0)
    rows = {}
    for alpha in (0.0, 0.5, 1.0):
        out = tmp_path / f"prep_{alpha}"
        prepare_movielens(ratings, movies, m=10, setting="mix", alpha=alpha,
                          out_dir=out, seed=1,
                          min_movie_ratings=20, min_user_ratings=20)
        raw = {"environment": {"type": "movielens", "dir": str(out)},
               "policies": ["lob_ts", "m_ts"], "T": 1000, "N": 50, "seed": 11}
        _, summary = run_experiment(parse_config(raw))
        rows[alpha] = {r.policy: r for r in summary}
    lob = [rows[a]["lob_ts"].mean_cum_regret for a in (0.0, 0.5, 1.0)]
    monotone = lob[0] <= lob[1] <= lob[2]
    margin = rows[0.0]["m_ts"].mean_cum_regret - rows[0.0]["lob_ts"].mean_cum_regret
    need = 2 * combined_se(rows[0.0]["m_ts"].se, rows[0.0]["lob_ts"].se)
    # supporting evidence at the horizon the mixing figure actually uses:
    # the known-means baseline's bias is linear in T, the crossover sits
    # beyond T=1000
    raw = {"environment": {"type": "movielens", "dir": str(tmp_path / "prep_0.0")},
           "policies": ["lob_ts", "m_ts"], "T": 4000, "N": 50, "seed": 11}
    _, long_summary = run_experiment(parse_config(raw))
    long_rows = {r.policy: r for r in long_summary}
    long_margin = long_rows["m_ts"].mean_cum_regret - long_rows["lob_ts"].mean_cum_regret
    long_need = 2 * combined_se(long_rows["m_ts"].se, long_rows["lob_ts"].se)
    print(f"\n  alpha sweep lob_ts: {[round(v) for v in lob]}; at T=4000: "
          f"lob_ts {long_rows['lob_ts'].mean_cum_regret:.0f} vs m_ts "
          f"{long_rows['m_ts'].mean_cum_regret:.0f} "
          f"(margin {long_margin:.0f}, need {long_need:.0f})")
    ok = monotone and margin >= need
    report(8, "misspecification robustness", ok,
           f"lob_ts nondecreasing in alpha: {monotone}; at alpha=0 beats m_ts by "
           f"{margin:.0f} (need >= {need:.0f})", started)
    assert monotone
    # Known-red clause at T=1000: the known-means baseline is still
    # competitive at alpha=0 on this horizon (its misspecification bias is
    # linear in T and overtakes beyond T~1000, as the T=4000 print shows).
    assert margin >= need


def test_criterion_9_t_proj_insensitivity():
    started = time.time()
    rows = {}
    for t_proj in (1, 10):
        rows[t_proj] = synthetic_run(
            [{"key": "lob_ts", "t_proj": t_proj}], seed=7,
            k=10, m=10, q=1.0, gamma=1.0, sigma=5.0, T=500, N=100,
        )["lob_ts"]
    diff = abs(rows[1].mean_cum_regret - rows[10].mean_cum_regret)
    need = 2 * combined_se(rows[1].se, rows[10].se)
    elapsed = time.time() - started
    ok = diff <= need and elapsed < 600
    report(9, "projection-period insensitivity", ok,
           f"t_proj=1: {rows[1].mean_cum_regret:.0f}, "
           f"t_proj=10: {rows[10].mean_cum_regret:.0f}, "
           f"diff {diff:.0f} <= {need:.0f}", started)
    assert diff <= need
    assert elapsed < 600


def test_criterion_10_determinism(tmp_path):
    started = time.time()
    raw = {
        "environment": {"type": "synthetic", "k": 8, "m": 4, "gamma": 1.0,
                        "sigma": 2.0, "q": 0.6},
        "policies": ["ucb", "ts", "m_ucb", "m_ts", "topm_ucb", "lob_ucb", "lob_ts"],
        "T": 150, "N": 5, "seed": 99,
    }
    blobs = []
    for name in ("first", "second"):
        config = parse_config(raw)
        traces, summary = run_experiment(config)
        paths = emit_results(traces, summary, tmp_path / name,
                             resolved_config_dict(config))
        blobs.append((paths["traces"].read_bytes(), paths["config"].read_bytes()))
    identical = blobs[0] == blobs[1]
    report(10, "byte-identical reruns", identical,
           f"traces and resolved config identical: {identical}", started)
    assert identical
