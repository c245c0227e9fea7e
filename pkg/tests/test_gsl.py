import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ingsl import tensor as T
from ingsl.errors import ConfigError, DomainError
from ingsl.gnn import GcnParams, make_gcn_params
from ingsl.gsl import (
    build_candidates,
    encode_structure,
    feature_smoothness,
    fuse_with_original,
    gsl_objective,
)
from ingsl.graph import normalize_adjacency
from test_gnn import identity_adjacency
from test_graph import random_graph, tiny_graph

from oracles import dense_normalize, topk_brute


class TestEncode:
    def test_degenerate_aggregation(self):
        x = np.array([[1.0, -1.0], [0.5, 2.0], [-3.0, 0.0]])
        params = GcnParams([T.parameter(np.eye(2)), T.parameter(np.eye(2))])
        e = encode_structure(identity_adjacency(3), T.constant(x), params)
        assert np.array_equal(e.data, np.maximum(x, 0.0))  # relu is idempotent

    def test_zero_features(self):
        rng = np.random.default_rng(0)
        params = make_gcn_params(rng, [3, 4, 4])
        e = encode_structure(identity_adjacency(4), T.constant(np.zeros((4, 3))), params)
        assert not e.data.any()

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(1)
        g = random_graph(rng, 8)
        dense = np.zeros((8, 8))
        for i, j in g.edges:
            dense[i, j] = dense[j, i] = 1.0
        a_norm = dense_normalize(dense)
        x = rng.normal(size=(8, 3))
        params = make_gcn_params(rng, [3, 4, 4])
        e = encode_structure(normalize_adjacency(g), T.constant(x), params)
        h = np.maximum(a_norm @ x @ params.layer_weights[0].data, 0.0)
        want = np.maximum(a_norm @ h @ params.layer_weights[1].data, 0.0)
        assert np.abs(e.data - want).max() < 1e-12


class TestBuildCandidates:
    def test_orthonormal_tie_break_smallest_j(self):
        e = T.constant(np.eye(4))
        cand = build_candidates(e, 1)
        rows, cols = cand.pairs()
        # all off-diagonal products are 0: each row ties, picks smallest j != i
        assert cols.tolist() == [1, 0, 0, 0]
        assert np.allclose(cand.sparse.values.data, 0.0)

    def test_duplicate_pair_selects_each_other(self):
        e = np.full((4, 2), 0.1)
        e[0] = e[1] = [10.0, 0.0]
        cand = build_candidates(T.constant(e), 1)
        _, cols = cand.pairs()
        assert cols[0] == 1 and cols[1] == 0

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(2)
        e = rng.normal(size=(12, 4))
        cand = build_candidates(T.constant(e), 3)
        sim = e @ e.T
        rows, cols = cand.pairs()
        for i in range(12):
            got = sorted(cols[rows == i].tolist())
            assert got == topk_brute(sim[i], 3, i)

    def test_k_bounds(self):
        e = T.constant(np.ones((3, 2)))
        with pytest.raises(ConfigError):
            build_candidates(e, 3)
        with pytest.raises(ConfigError):
            build_candidates(e, 0)

    def test_cosine_metric(self):
        rng = np.random.default_rng(3)
        e = rng.uniform(0.1, 1.0, (6, 3))
        cand = build_candidates(T.constant(e), 2, metric="cosine")
        unit = e / np.linalg.norm(e, axis=1)[:, None]
        sim = unit @ unit.T
        rows, cols = cand.pairs()
        for i in range(6):
            assert sorted(cols[rows == i].tolist()) == topk_brute(sim[i], 2, i)
        assert cand.sparse.values.data.max() <= 1.0 + 1e-12

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(4, 30))
    def test_topk_correct_for_every_k(self, seed, n):
        rng = np.random.default_rng(seed)
        e = rng.normal(size=(n, 3))
        sim = e @ e.T
        for k in range(1, n):
            cand = build_candidates(T.constant(e), k)
            rows, cols = cand.pairs()
            for i in range(n):
                assert sorted(cols[rows == i].tolist()) == topk_brute(sim[i], k, i)

    def test_gradient_flows_into_kept_entries(self):
        rng = np.random.default_rng(4)
        e = T.parameter(rng.normal(size=(6, 3)))

        def f(p):
            cand = build_candidates(p, 2)
            return T.sum_all(cand.sparse.values)

        assert T.gradient_check(f, [e]) < 1e-4

    def test_additional_edge_accounting(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 10)
        e = rng.normal(size=(10, 3))
        cand = build_candidates(T.constant(e), 4)
        rows, cols = cand.pairs()
        original = g.edge_set()
        additional = sum(
            1 for i, j in zip(rows, cols)
            if (min(i, j), max(i, j)) not in original
        )
        overlaps = sum(
            1 for i, j in zip(rows, cols)
            if (min(i, j), max(i, j)) in original
        )
        assert additional == 10 * 4 - overlaps


class TestObjective:
    def test_lambda_zero(self):
        out = gsl_objective(T.constant(0.7), T.constant(0.9), 0.0)
        assert float(out.data) == 0.7

    def test_reg_zero(self):
        out = gsl_objective(T.constant(0.7), T.constant(0.0), 2.0)
        assert float(out.data) == 0.7

    def test_arithmetic(self):
        out = gsl_objective(T.constant(0.7), T.constant(0.2), 0.5)
        assert abs(float(out.data) - 0.8) < 1e-15

    def test_negative_lambda(self):
        with pytest.raises(DomainError):
            gsl_objective(T.constant(1.0), T.constant(1.0), -0.1)

    def test_feature_smoothness(self):
        x = np.array([[0.0], [1.0], [3.0]])
        vals = T.constant(np.array([2.0, 1.0]))
        out = feature_smoothness(vals, np.array([0, 1]), np.array([1, 2]), x)
        # (2*1^2 + 1*2^2) / 2 = 3
        assert abs(float(out.data) - 3.0) < 1e-15


class TestFusion:
    def test_zero_residual_recovers_original(self):
        rng = np.random.default_rng(6)
        g = random_graph(rng, 8)
        e = rng.uniform(0.1, 1.0, (8, 3))
        cand = build_candidates(T.constant(e), 2)
        fused = fuse_with_original(g, cand, residual_weight=0.0)
        assert np.array_equal(fused.to_dense(), normalize_adjacency(g).to_dense())

    def test_empty_candidates_recovers_original(self):
        rng = np.random.default_rng(7)
        g = random_graph(rng, 6)
        fused = fuse_with_original(g, None, residual_weight=1.0)
        assert np.array_equal(fused.to_dense(), normalize_adjacency(g).to_dense())

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(8)
        g = tiny_graph(
            n=5,
            edges=[(0, 1), (1, 2), (3, 4)],
            labels=[0, 1, 0, 1, 0],
            features=rng.normal(size=(5, 2)),
        )
        e = rng.uniform(0.1, 1.0, (5, 3))
        cand = build_candidates(T.constant(e), 2)
        w = 0.7
        fused = fuse_with_original(g, cand, residual_weight=w)

        a = np.zeros((5, 5))
        for i, j in g.edges:
            a[i, j] = a[j, i] = 1.0
        s = np.zeros((5, 5))
        rows, cols = cand.pairs()
        s[rows, cols] = cand.sparse.values.data
        assert np.abs(fused.to_dense() - dense_normalize(a + w * s)).max() < 1e-12

    def test_negative_residual_rejected(self):
        g = tiny_graph()
        with pytest.raises(DomainError):
            fuse_with_original(g, None, residual_weight=-1.0)

    def test_gradient_through_fusion(self):
        rng = np.random.default_rng(9)
        g = tiny_graph(
            n=5,
            edges=[(0, 1), (1, 2), (3, 4)],
            labels=[0, 1, 0, 1, 0],
            features=rng.normal(size=(5, 2)),
        )
        e = T.parameter(rng.uniform(0.3, 1.0, (5, 3)))

        def f(p):
            cand = build_candidates(p, 2)
            fused = fuse_with_original(g, cand, residual_weight=1.0)
            return T.sum_all(T.mul(fused.values, T.constant(np.arange(1.0, fused.nnz + 1.0))))

        assert T.gradient_check(f, [e]) < 1e-4
