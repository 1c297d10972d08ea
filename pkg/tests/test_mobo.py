"""Pareto machinery, hypervolume, local penalization, batch selection."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nago.errors import ParameterDomainError
from nago.evalbridge import make_evaluator
from nago.mobo import (
    MoboConfig,
    ParetoArchive,
    PenalizerState,
    dominates,
    estimate_lipschitz,
    hard_penalizer,
    hypervolume,
    pareto_filter,
    penalize_batch,
    run_mobo,
    select_batch,
)
from nago.rng import generator
from nago.space import SearchSpace


def brute_force_front(points):
    """Independent O(n^2) oracle for the nondominated subset."""
    out = []
    for i, p in enumerate(points):
        dominated = False
        for j, q in enumerate(points):
            if i == j:
                continue
            if all(a <= b for a, b in zip(q, p)) and any(a < b for a, b in zip(q, p)):
                dominated = True
                break
        if not dominated:
            out.append(i)
    return out


class TestParetoFilter:
    def test_simple_fixture(self):
        pts = [(1, 2), (2, 1), (3, 3)]
        assert pareto_filter(pts) == [0, 1]

    def test_single_point(self):
        assert pareto_filter([(5, 5)]) == [0]

    def test_duplicates_are_mutually_nondominated(self):
        assert pareto_filter([(1, 1), (1, 1), (2, 2)]) == [0, 1]

    def test_matches_brute_force_on_random_sets(self):
        rng = generator(0)
        for trial in range(10):
            pts = [tuple(v) for v in rng.random((100, 2))]
            assert pareto_filter(pts) == brute_force_front(pts)

    def test_three_objectives_against_oracle(self):
        rng = generator(1)
        pts = [tuple(v) for v in rng.random((60, 3))]
        assert pareto_filter(pts) == brute_force_front(pts)

    def test_mixed_arity_rejected(self):
        with pytest.raises(ParameterDomainError):
            pareto_filter([(1, 2), (1, 2, 3)])


class TestParetoArchive:
    def test_mutual_nondominance_keeps_all(self):
        a = ParetoArchive()
        a.insert({}, (0,), (0.4, 0.6))
        a.insert({}, (0,), (0.6, 0.4))
        assert a.insert({}, (0,), (0.5, 0.5))
        assert len(a) == 3

    def test_dominated_insert_rejected(self):
        a = ParetoArchive()
        a.insert({}, (0,), (0.2, 0.2))
        assert not a.insert({}, (0,), (0.3, 0.3))
        assert len(a) == 1

    def test_insert_evicts_dominated_members(self):
        a = ParetoArchive()
        a.insert({}, (0,), (0.5, 0.5))
        a.insert({}, (0,), (0.9, 0.1))
        assert a.insert({}, (0,), (0.4, 0.4))
        assert a.vectors() == [(0.9, 0.1), (0.4, 0.4)]

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.tuples(st.floats(0, 1, width=32), st.floats(0, 1, width=32)),
            min_size=1,
            max_size=40,
        )
    )
    def test_archive_is_always_dominance_free(self, objectives):
        a = ParetoArchive()
        for i, vec in enumerate(objectives):
            a.insert({"i": i}, (0.0,), vec)
        vecs = a.vectors()
        for i, p in enumerate(vecs):
            for j, q in enumerate(vecs):
                if i != j:
                    assert not dominates(p, q)


class TestHypervolume:
    def test_single_point(self):
        assert hypervolume([(0.0, 0.0)], (1.0, 1.0)) == pytest.approx(1.0)

    def test_empty(self):
        assert hypervolume([], (1.0, 1.0)) == 0.0

    def test_boundary_points_contribute_nothing(self):
        assert hypervolume([(1.0, 0.5)], (1.0, 1.0)) == 0.0

    def test_two_point_front_against_monte_carlo(self):
        pts = [(0.2, 0.8), (0.8, 0.2)]
        exact = hypervolume(pts, (1.0, 1.0))
        rng = generator(5)
        samples = rng.random((200_000, 2))
        dominated = np.zeros(len(samples), dtype=bool)
        for p in pts:
            dominated |= (samples >= p).all(axis=1)
        assert exact == pytest.approx(0.28)
        assert abs(exact - dominated.mean()) < 0.005

    def test_dominated_points_do_not_add_volume(self):
        base = hypervolume([(0.2, 0.2)], (1.0, 1.0))
        more = hypervolume([(0.2, 0.2), (0.5, 0.5)], (1.0, 1.0))
        assert base == more

    def test_three_objectives_monte_carlo(self):
        # one point at the origin of the unit cube dominates it entirely
        hv = hypervolume([(0.0, 0.0, 0.0)], (1.0, 1.0, 1.0), mc_samples=50_000, seed=1)
        assert hv == pytest.approx(1.0, abs=0.01)

    def test_more_than_three_rejected(self):
        with pytest.raises(ParameterDomainError):
            hypervolume([(0, 0, 0, 0)], (1, 1, 1, 1))


class TestHardPenalizer:
    def test_zero_at_anchor(self):
        assert hard_penalizer(0.0, 2.0, 0.5, 0.1, 0.0) == 0.0

    def test_one_far_away(self):
        assert hard_penalizer(1e9, 2.0, 0.5, 0.1, 0.0) == 1.0

    def test_reference_fixture(self):
        # L=2, distance 0.5, |mu - M| = 0.8, sigma = 0.2 -> exactly 1.0
        assert hard_penalizer(0.5, 2.0, 0.8, 0.2, 0.0) == 1.0

    def test_interior_value(self):
        # L=1, d=0.1, denom=0.4 -> 0.25
        assert hard_penalizer(0.1, 1.0, 0.2, 0.2, 0.0) == pytest.approx(0.25)

    @settings(max_examples=100, deadline=None)
    @given(
        d=st.floats(0, 100),
        L=st.floats(1e-3, 100),
        mu=st.floats(-10, 10),
        sigma=st.floats(0, 10),
        m=st.floats(-10, 10),
    )
    def test_range_property(self, d, L, mu, sigma, m):
        phi = hard_penalizer(d, L, mu, sigma, m)
        assert 0.0 <= phi <= 1.0

    def test_vectorized_matches_scalar(self):
        rng = generator(2)
        cands = rng.random((50, 3))
        anchor = cands[7]
        mu = rng.random(50)
        sigma = rng.random(50) * 0.5
        phi = penalize_batch(cands, anchor[None, :], 1.5, mu, sigma, 0.3)
        for i in range(50):
            d = float(np.linalg.norm(cands[i] - anchor))
            assert phi[i] == pytest.approx(hard_penalizer(d, 1.5, mu[i], sigma[i], 0.3), abs=1e-12)


class TestSelectBatch:
    def test_b1_is_plain_argmax(self):
        rng = generator(3)
        cands = rng.random((100, 2))
        acq = rng.random(100)
        picked = select_batch(cands, acq, np.zeros(100), np.ones(100), 1, 1.0, 0.0)
        assert picked == [int(np.argmax(acq))]

    def test_batch_points_distinct(self):
        rng = generator(4)
        cands = rng.random((200, 2))
        acq = rng.random(200)
        picked = select_batch(cands, acq, np.zeros(200), np.full(200, 0.2), 8, 2.0, 0.0)
        assert len(set(picked)) == 8

    def test_bimodal_coverage(self):
        # symmetric bimodal acquisition: a batch of two covers both modes
        covered = 0
        for seed in range(10):
            rng = generator(seed)
            cands = rng.random((400, 1))
            acq = np.exp(-(((cands[:, 0] - 0.25) / 0.08) ** 2)) + np.exp(
                -(((cands[:, 0] - 0.75) / 0.08) ** 2)
            )
            picked = select_batch(cands, acq, -acq, np.full(400, 0.05), 2, 1.0, -1.0)
            xs = sorted(cands[picked, 0])
            covered += xs[0] < 0.5 < xs[1]
        assert covered >= 9

    def test_pool_too_small(self):
        with pytest.raises(ParameterDomainError):
            select_batch(np.zeros((2, 1)), np.zeros(2), np.zeros(2), np.zeros(2), 3, 1.0, 0.0)

    def test_penalizer_state_validates(self):
        state = PenalizerState(lipschitz=2.0, best_scalarized=0.5)
        assert state.anchors == []
        with pytest.raises(ParameterDomainError):
            PenalizerState(lipschitz=0.0, best_scalarized=0.5)


class TestEstimateLipschitz:
    def test_linear_function_gradient_norm(self):
        w = np.array([3.0, -4.0])

        def mean(X):
            return X @ w

        L = estimate_lipschitz(mean, 2, seed=0, n_points=64)
        assert L == pytest.approx(5.0, rel=1e-4)

    def test_floor_on_constant_function(self):
        L = estimate_lipschitz(lambda X: np.zeros(len(X)), 3, seed=1)
        assert L == pytest.approx(1e-3)


TRUE_TOY_HV = 0.1 + 4 / 3 - 0.5 + 0.11  # analytic front of (x^2, (1-x)^2) at ref (1.1, 1.1)


def unit_space(d):
    return SearchSpace("vector", {f"x{i}": (0.0, 1.0, False) for i in range(d)})


class TestRunMobo:
    def test_toy_recovery_smoke(self):
        # short run recovers most of the analytic hypervolume; the full
        # 30-iteration criterion lives in the acceptance suite
        ev = make_evaluator("builtin:toy-pareto")
        res = run_mobo(ev, unit_space(1), ["f1", "f2"], iterations=4, batch_size=4,
                       seed=0, reference=(1.1, 1.1))
        assert res.hypervolume_trace[-1] / TRUE_TOY_HV > 0.85

    def test_hypervolume_trace_monotone(self):
        ev = make_evaluator("builtin:toy-pareto")
        res = run_mobo(ev, unit_space(1), ["f1", "f2"], iterations=3, batch_size=4,
                       seed=1, reference=(1.1, 1.1))
        assert all(b >= a - 1e-12 for a, b in zip(res.hypervolume_trace, res.hypervolume_trace[1:]))

    def test_batch_size_one_runs(self):
        ev = make_evaluator("builtin:toy-pareto")
        res = run_mobo(ev, unit_space(1), ["f1", "f2"], iterations=2, batch_size=1, seed=2)
        per_iter = {}
        for p in res.history:
            per_iter.setdefault(p.iteration, []).append(p)
        assert len(per_iter[1]) == 1 and len(per_iter[2]) == 1

    def test_history_and_archive_consistent(self):
        ev = make_evaluator("builtin:toy-pareto")
        res = run_mobo(ev, unit_space(1), ["f1", "f2"], iterations=2, batch_size=4, seed=3)
        ok = [p for p in res.history if p.status == "ok"]
        assert all(p.objectives is not None for p in ok)
        vecs = res.archive.vectors()
        for i, p in enumerate(vecs):
            assert not any(dominates(q, p) for j, q in enumerate(vecs) if i != j)

    def test_reproducible(self):
        a = run_mobo(make_evaluator("builtin:toy-pareto"), unit_space(1), ["f1", "f2"],
                     iterations=2, batch_size=3, seed=7)
        b = run_mobo(make_evaluator("builtin:toy-pareto"), unit_space(1), ["f1", "f2"],
                     iterations=2, batch_size=3, seed=7)
        assert [p.to_json_line() for p in a.history] == [p.to_json_line() for p in b.history]

    def test_needs_two_objectives(self):
        with pytest.raises(ParameterDomainError):
            run_mobo(make_evaluator("builtin:toy-pareto"), unit_space(1), ["f1"],
                     iterations=1, batch_size=2, seed=0)
