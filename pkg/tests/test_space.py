"""Architecture sampling: stage splits, hierarchy flattening, invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nago import costs
from nago.errors import InfeasibleSplitError, ParameterDomainError
from nago.graphs import ErParams, WsParams
from nago.rng import generator
from nago.space import (
    DEFAULT_THETA_C,
    GeneratorHyperparams,
    RnagHyperparams,
    make_search_space,
    sample_hnag,
    sample_merge_and_ops,
    sample_rnag,
    split_stages,
    theta_from_flat,
)


class TestSplitStages:
    def test_worked_example(self):
        assert split_stages(20, [0.2, 0.2, 0.6]).nodes_per_stage == (4, 4, 12)

    def test_symmetric_minimum(self):
        assert split_stages(3, [0.33, 0.33, 0.33]).nodes_per_stage == (1, 1, 1)

    def test_tie_break_favours_earlier_stage(self):
        assert split_stages(8, [0.33, 0.33, 0.33]).nodes_per_stage == (3, 3, 2)

    def test_infeasible(self):
        with pytest.raises(InfeasibleSplitError):
            split_stages(2, [0.3, 0.3, 0.4])

    def test_minimum_one_node_per_stage(self):
        assert split_stages(3, [0.01, 0.01, 0.98]).nodes_per_stage == (1, 1, 1)

    @settings(max_examples=100, deadline=None)
    @given(
        n=st.integers(3, 40),
        ratios=st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3),
    )
    def test_sums_and_minimums(self, n, ratios):
        counts = split_stages(n, ratios).nodes_per_stage
        assert sum(counts) == n
        assert all(c >= 1 for c in counts)


class TestMergeAndOps:
    def test_one_hot_op(self):
        merges, ops = sample_merge_and_ops(50, (1, 0, 0), (0, 1, 0, 0, 0), seed=0)
        assert set(ops) == {"conv3x3"}
        assert set(merges) == {"weighted_sum"}

    def test_rejects_unnormalized(self):
        with pytest.raises(ParameterDomainError):
            sample_merge_and_ops(5, (0.5, 0.2, 0.1), (0.2,) * 5, seed=0)

    def test_uniform_frequencies(self):
        # empirical frequencies of a uniform op draw within 3 sigma of 0.2
        n = 10_000
        _, ops = sample_merge_and_ops(n, (1, 0, 0), (0.2,) * 5, seed=1)
        sigma = np.sqrt(0.2 * 0.8 / n)
        for kind in ("conv1x1", "conv3x3", "conv5x5", "pool3x3", "pool5x5"):
            assert abs(ops.count(kind) / n - 0.2) < 3 * sigma

    def test_deterministic(self):
        a = sample_merge_and_ops(20, (0.3, 0.3, 0.4), (0.2,) * 5, seed=9)
        b = sample_merge_and_ops(20, (0.3, 0.3, 0.4), (0.2,) * 5, seed=9)
        assert a == b


def _theta(n_t=4, k_t=2, p_t=0.5, n_m=2, p_m=0.5, n_b=4, k_b=2, p_b=0.5, **kw):
    return GeneratorHyperparams(
        WsParams(n_t, k_t, p_t), ErParams(n_m, p_m), WsParams(n_b, k_b, p_b), **kw
    )


class TestSampleHnag:
    def test_node_count_is_product_when_mid_collapses(self):
        theta = _theta(n_t=5, n_m=1, n_b=6)
        ir = sample_hnag(theta, seed=0, param_budget=500_000)
        assert len(ir.nodes) == 5 * 6

    def test_table_row_shape(self):
        # top (8,5,0.6), mid (1,0.7), bottom (5,4,0.2): 40 compute nodes,
        # solved under the 4.0M small-image parameter limit
        theta = _theta(8, 5, 0.6, 1, 0.7, 5, 4, 0.2)
        ir = sample_hnag(theta, seed=7, param_budget=4_000_000)
        assert len(ir.nodes) == 40
        assert costs.count_params(ir) <= 4_000_000

    def test_contains_flat_default_topology(self):
        # 3-node feed-forward top graph + single-node mid level reproduces
        # the flat three-stage construction: one bottom graph per stage
        theta = _theta(3, 2, 0.8, 1, 1.0, 32, 4, 0.75)
        ir = sample_hnag(theta, seed=3, param_budget=4_000_000)
        assert len(ir.nodes) == 96
        per_stage = [sum(1 for n in ir.nodes if n.stage_index == s) for s in range(3)]
        assert per_stage == [32, 32, 32]

    def test_budget_respected_and_tight(self):
        theta = _theta()
        ir = sample_hnag(theta, seed=1, param_budget=2_000_000)
        got = costs.count_params(ir)
        assert 0.9 * 2_000_000 < got <= 2_000_000

    def test_byte_identical_for_same_inputs(self):
        theta = _theta()
        a = sample_hnag(theta, seed=42, param_budget=1_000_000).to_json()
        b = sample_hnag(theta, seed=42, param_budget=1_000_000).to_json()
        assert a == b

    def test_seed_changes_topology(self):
        theta = _theta(p_m=0.5)
        a = sample_hnag(theta, seed=1, param_budget=1_000_000).to_json()
        b = sample_hnag(theta, seed=2, param_budget=1_000_000).to_json()
        assert a != b

    def test_resolution_monotone_and_validates(self):
        theta = _theta(n_t=6)
        ir = sample_hnag(theta, seed=5, param_budget=1_000_000)
        ir.validate()
        div = {n.id: n.resolution_divisor for n in ir.nodes}
        div[ir.input_id] = 1
        div[ir.output_id] = max(d for d in div.values())
        for s, d in ir.edges:
            assert div[s] <= div[d]

    @settings(max_examples=40, deadline=None)
    @given(
        n_t=st.integers(3, 8),
        n_m=st.integers(1, 4),
        n_b=st.integers(3, 6),
        p=st.floats(0.1, 0.9),
        seed=st.integers(0, 2**31),
    )
    def test_random_draws_always_validate(self, n_t, n_m, n_b, p, seed):
        theta = _theta(n_t=n_t, p_t=p, n_m=n_m, p_m=p, n_b=n_b, p_b=p)
        ir = sample_hnag(theta, seed=seed, param_budget=800_000)
        ir.validate()
        # hierarchy flattening preserves the node-count product
        assert len(ir.nodes) == n_t * n_m * n_b


class TestSampleRnag:
    def test_default_has_96_nodes(self):
        theta = RnagHyperparams(stages=(WsParams(32, 4, 0.75),) * 3)
        ir = sample_rnag(theta, seed=0, param_budget=4_000_000)
        assert len(ir.nodes) == 96

    def test_deterministic_lattice(self):
        theta = RnagHyperparams(stages=(WsParams(10, 2, 0.0),) * 3)
        a = sample_rnag(theta, seed=4, param_budget=500_000)
        b = sample_rnag(theta, seed=99, param_budget=500_000)
        # p=0 means the topology is the fixed lattice regardless of seed
        assert a.edges == b.edges

    def test_property_sweep(self):
        rng = generator(123)
        space = make_search_space("rnag")
        for i in range(25):
            theta = space.to_theta(space.sample_uniform(rng))
            ir = sample_rnag(theta, seed=i, param_budget=4_000_000)
            ir.validate()
            assert len(ir.nodes) == sum(ws.n for ws in theta.stages)


class TestThetaDocuments:
    def test_hnag_roundtrip(self):
        theta = _theta(5, 3, 0.2, 2, 0.6, 7, 4, 0.8)
        assert theta_from_flat(theta.to_flat()) == theta

    def test_rnag_roundtrip(self):
        theta = RnagHyperparams(stages=(WsParams(12, 3, 0.5), WsParams(15, 4, 0.2), WsParams(11, 2, 0.9)))
        assert theta_from_flat(theta.to_flat()) == theta

    def test_theta_s_normalized(self):
        theta = _theta(theta_s=(0.33, 0.33, 0.33))
        assert abs(sum(theta.theta_s) - 1.0) < 1e-12

    def test_rejects_bad_weights(self):
        with pytest.raises(ParameterDomainError):
            _theta(theta_m=(0.5, 0.2, 0.1))
        with pytest.raises(ParameterDomainError):
            _theta(theta_c=(1.0, -2.0, 4.0))


class TestSearchSpace:
    def test_dimensions(self):
        assert make_search_space("hnag", "graph").dim == 8
        assert make_search_space("rnag").dim == 9
        assert make_search_space("hnag", "graph+mergeop").dim == 16
        assert make_search_space("hnag", "graph+stagechannel").dim == 14
        assert make_search_space("hnag", "all").dim == 22

    def test_vector_to_theta_rounds_and_clamps(self):
        sp = make_search_space("hnag", "graph")
        raw = np.array([3.2, 5.0, 0.5, 1.4, 0.5, 3.0, 4.9, 0.5])
        theta = sp.to_theta(raw)
        assert theta.theta_top.n == 3
        assert theta.theta_top.k == 2  # clamped below n
        assert theta.theta_mid.n == 1
        assert theta.theta_bottom.k == 2  # 5 clamped to n_b - 1

    def test_normalize_roundtrip(self):
        sp = make_search_space("hnag", "graph")
        rng = generator(5)
        raw = sp.sample_uniform(rng)
        back = sp.denormalize(sp.normalize(raw))
        assert np.allclose(raw, back)

    def test_uniform_samples_within_bounds(self):
        sp = make_search_space("hnag", "all")
        rng = generator(6)
        for _ in range(50):
            raw = sp.sample_uniform(rng)
            assert (raw >= sp.lower).all() and (raw <= sp.upper).all()
            sp.to_theta(raw)  # never raises
