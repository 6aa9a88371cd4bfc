"""Synthetic task generation and the reward model."""

import numpy as np
import pytest

from orderbandits.environments import (
    BanditInstance,
    SyntheticConfig,
    generate_synthetic,
    state_means,
)
from orderbandits.errors import TooManyStates


class TestStateMeans:
    def test_formula(self):
        # permutation (1, 2, 0) with gamma=1: best arm gets (k-1)*gamma
        assert state_means((1, 2, 0), 1.0).tolist() == [0.0, 2.0, 1.0]

    def test_adjacent_gaps_are_gamma(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            k = int(rng.integers(2, 12))
            gamma = float(rng.uniform(0.1, 3.0))
            perm = tuple(int(x) for x in rng.permutation(k))
            mu = state_means(perm, gamma)
            along = mu[list(perm)]
            assert np.allclose(np.diff(along), -gamma)
            gaps = mu.max() - mu
            assert min(g for g in gaps if g > 0) == pytest.approx(gamma)


class TestGenerateSynthetic:
    def test_states_distinct_and_consistent(self):
        cfg = SyntheticConfig(k=6, m=10, gamma=0.5, sigma=1.0, q=1.0, seed=4)
        full, instances, revealed = generate_synthetic(cfg, n_instances=3)
        assert full.m == revealed.m == 10
        perms = set()
        for s, order in enumerate(full.states):
            mu = full.mean_vectors[s]
            for a, b in order.relations:
                assert mu[a] >= mu[b]
            perms.add(tuple(np.argsort(-mu)))
        assert len(perms) == 10
        for inst in instances:
            assert inst.true_state in range(10)
            # instance means satisfy the true state's full order
            order = full.states[inst.true_state]
            for a, b in order.relations:
                assert inst.means[a] >= inst.means[b]

    def test_q_one_reveals_everything(self):
        cfg = SyntheticConfig(k=15, m=1, q=1.0, seed=0)
        full, _, revealed = generate_synthetic(cfg)
        assert np.array_equal(full.states[0].closure, revealed.states[0].closure)

    def test_revealed_relation_count(self):
        cfg = SyntheticConfig(k=15, m=4, q=0.6, seed=1)
        _, _, revealed = generate_synthetic(cfg)
        for order in revealed.states:
            assert len(order.relations) == 9

    def test_deterministic(self):
        cfg = SyntheticConfig(k=7, m=5, q=0.4, seed=9)
        a = generate_synthetic(cfg, n_instances=2)
        b = generate_synthetic(cfg, n_instances=2)
        for s in range(5):
            assert a[0].states[s].relations == b[0].states[s].relations
            assert a[2].states[s].relations == b[2].states[s].relations
        assert np.array_equal(a[0].mean_vectors, b[0].mean_vectors)
        for ia, ib in zip(a[1], b[1]):
            assert ia.true_state == ib.true_state
            assert ia.pull(0) == ib.pull(0)

    def test_too_many_states(self):
        with pytest.raises(TooManyStates):
            generate_synthetic(SyntheticConfig(k=3, m=7, seed=0))

    def test_exhaustive_state_count_allowed(self):
        full, _, _ = generate_synthetic(SyntheticConfig(k=3, m=6, seed=0))
        assert len({s.relations for s in full.states}) == 6


class TestBanditInstance:
    def test_pull_degenerate_sigma(self):
        inst = BanditInstance(np.array([1.0, -2.0]), 1e-12, seed=0)
        assert inst.pull(1) == pytest.approx(-2.0, abs=1e-9)

    def test_sample_mean_concentrates(self):
        inst = BanditInstance(np.array([0.7]), 2.0, seed=3)
        draws = np.array([inst.pull(0) for _ in range(100_000)])
        assert abs(draws.mean() - 0.7) <= 4 * 2.0 / np.sqrt(100_000)
        assert abs(draws.var() - 4.0) <= 0.05 * 4.0

    def test_regret(self):
        inst = BanditInstance(state_means((2, 0, 1), 1.0), 1.0, seed=0)
        assert inst.regret_of(2) == 0.0
        assert inst.regret_of(int(np.argmin(inst.means))) == pytest.approx(2.0)

    def test_regret_zero_when_all_equal(self):
        inst = BanditInstance(np.full(4, 1.5), 1.0, seed=0)
        assert all(inst.regret_of(a) == 0.0 for a in range(4))

    def test_fresh_rewinds_reward_stream(self):
        inst = BanditInstance(np.array([0.0, 1.0]), 1.0, seed=8)
        first = [inst.pull(0), inst.pull(1)]
        again = inst.fresh()
        assert [again.pull(0), again.pull(1)] == first

    def test_validation(self):
        with pytest.raises(ValueError):
            BanditInstance(np.array([np.inf]), 1.0)
        with pytest.raises(ValueError):
            BanditInstance(np.array([0.0]), 0.0)
        with pytest.raises(IndexError):
            BanditInstance(np.array([0.0]), 1.0).pull(1)
