import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import graphcp as g
from graphcp.errors import ValidationError


def brute_force_knn(features, k, min_similarity=0.0):
    """O(n^2) reference: per node, top-k by (similarity desc, index asc)."""
    n = features.shape[0]
    rows = []
    for i in range(n):
        cands = []
        for j in range(n):
            if j == i:
                continue
            sim = g.cosine_similarity(features[i], features[j])
            if sim > min_similarity:
                cands.append((-sim, j))
        cands.sort()
        chosen = sorted((j, -negsim) for negsim, j in cands[:k])
        rows.append(chosen)
    return rows


def graph_rows(graph):
    return [sorted(zip(map(int, graph.row(i)[0]), graph.row(i)[1]))
            for i in range(graph.n)]


def test_cosine_hand_values():
    assert g.cosine_similarity([1, 0], [1, 0]) == pytest.approx(1.0)
    assert g.cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0)
    assert g.cosine_similarity([3, 4], [4, 3]) == pytest.approx(0.96)
    assert g.cosine_similarity([0, 0], [1, 2]) == 0.0


def test_cosine_dimension_mismatch():
    with pytest.raises(ValidationError, match="dimension"):
        g.cosine_similarity([1, 2], [1, 2, 3])


def test_knn_three_node_example():
    feats = np.array([[1, 0], [1, 0.01], [0, 1]], dtype=float)
    graph = g.build_knn_graph(feats, g.KnnConfig(k=1))
    arcs = {(i, int(graph.row(i)[0][0])) for i in range(3)}
    assert arcs == {(0, 1), (1, 0), (2, 1)}


def test_knn_k_zero_gives_empty_graph():
    feats = np.random.default_rng(0).normal(size=(5, 3))
    graph = g.build_knn_graph(feats, g.KnnConfig(k=0))
    assert graph.nnz == 0
    assert np.all(graph.degrees == 0)


def test_knn_duplicate_rows_weight_one():
    feats = np.array([[2.0, 1.0], [2.0, 1.0]])
    graph = g.build_knn_graph(feats, g.KnnConfig(k=1))
    for i in range(2):
        cols, w = graph.row(i)
        assert int(cols[0]) == 1 - i
        assert w[0] == pytest.approx(1.0, abs=1e-12)


def test_knn_matches_bruteforce_on_random_inputs():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n = int(rng.integers(5, 60))
        d = int(rng.integers(2, 8))
        k = int(rng.integers(1, min(n - 1, 6) + 1))
        feats = rng.normal(size=(n, d))
        graph = g.build_knn_graph(feats, g.KnnConfig(k=k))
        expected = brute_force_knn(feats, k)
        actual = graph_rows(graph)
        for exp_row, act_row in zip(expected, actual):
            assert [j for j, _ in exp_row] == [j for j, _ in act_row]
            for (_, se), (_, sa) in zip(exp_row, act_row):
                assert sa == pytest.approx(se, abs=1e-6)


def test_sampled_full_pool_equals_exact():
    rng = np.random.default_rng(3)
    feats = rng.normal(size=(40, 5))
    exact = g.build_knn_graph(feats, g.KnnConfig(k=3))
    sampled = g.build_knn_graph(feats, g.KnnConfig(k=3, sample_size=39, seed=5))
    assert np.array_equal(exact.row_offsets, sampled.row_offsets)
    assert np.array_equal(exact.col_indices, sampled.col_indices)
    assert np.array_equal(exact.weights, sampled.weights)


def test_sampled_mode_deterministic():
    rng = np.random.default_rng(4)
    feats = rng.normal(size=(60, 4))
    cfg = g.KnnConfig(k=2, sample_size=30, seed=11)
    g1 = g.build_knn_graph(feats, cfg)
    g2 = g.build_knn_graph(feats, cfg)
    assert np.array_equal(g1.col_indices, g2.col_indices)
    assert np.array_equal(g1.weights, g2.weights)
    g3 = g.build_knn_graph(feats, g.KnnConfig(k=2, sample_size=30, seed=12))
    assert not (np.array_equal(g1.col_indices, g3.col_indices)
                and np.array_equal(g1.weights, g3.weights))


def test_knn_rejects_k_ge_n():
    feats = np.zeros((3, 2))
    with pytest.raises(ValidationError, match="k=3"):
        g.build_knn_graph(feats, g.KnnConfig(k=3))


def test_sample_size_must_dominate_k():
    with pytest.raises(ValidationError, match="sample_size"):
        g.KnnConfig(k=5, sample_size=20)


def test_sample_size_cannot_exceed_n():
    feats = np.zeros((5, 2))
    with pytest.raises(ValidationError, match="exceeds n"):
        g.build_knn_graph(feats, g.KnnConfig(k=0, sample_size=10))


def test_exact_mode_size_guard():
    feats = np.zeros((g.graph.EXACT_MODE_MAX_N + 1, 1))
    with pytest.raises(ValidationError, match="exact-mode limit"):
        g.build_knn_graph(feats, g.KnnConfig(k=1))


def test_zero_norm_rows_warn_and_stay_isolated():
    feats = np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.1]])
    with pytest.warns(UserWarning, match="zero-norm"):
        graph = g.build_knn_graph(feats, g.KnnConfig(k=1))
    assert graph.row(1)[0].shape[0] == 0
    assert graph.row(0)[0].shape[0] == 1


def test_row_normalize_examples():
    graph = g.from_arcs(3, [(0, 1), (0, 2)], [2.0, 2.0])
    normed = g.row_normalize(graph)
    assert np.allclose(normed.row(0)[1], [0.5, 0.5])
    assert normed.row(1)[0].shape[0] == 0  # empty row stays empty
    g2 = g.from_arcs(2, [(0, 1)], [1.0])
    assert g.row_normalize(g2).row(0)[1][0] == pytest.approx(1.0)


def test_row_normalize_rejects_negative_degree():
    graph = g.from_arcs(2, [(0, 1)], [-0.5])
    with pytest.raises(ValidationError, match="min_similarity"):
        g.row_normalize(graph)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=30), st.integers(min_value=0, max_value=2 ** 31))
def test_row_normalize_rows_sum_to_one(n_arcs, seed):
    rng = np.random.default_rng(seed)
    n = 12
    pairs = {(int(u), int(v)) for u, v in rng.integers(0, n, size=(n_arcs, 2)) if u != v}
    if not pairs:
        return
    arcs = np.array(sorted(pairs))
    weights = rng.uniform(0.1, 5.0, size=arcs.shape[0])
    normed = g.row_normalize(g.from_arcs(n, arcs, weights))
    for i in range(n):
        w = normed.row(i)[1]
        if w.shape[0]:
            assert math.fsum(w) == pytest.approx(1.0, abs=1e-9)


def test_degrees_match_row_sums(small_bundle):
    graph = g.adjacency_graph(small_bundle.n, small_bundle.edges)
    for i in range(0, graph.n, 37):
        assert graph.degrees[i] == pytest.approx(math.fsum(graph.row(i)[1]))


def test_duplicate_arcs_rejected():
    with pytest.raises(ValidationError, match="duplicate arc"):
        g.from_arcs(3, [(0, 1), (0, 1)])


def test_knn_cache_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    feats = rng.normal(size=(30, 4))
    feat_file = tmp_path / "x.snpm"
    g.write_matrix(feats, feat_file)
    loaded = g.load_matrix(feat_file)
    cfg = g.KnnConfig(k=3, seed=2)
    graph = g.build_knn_graph(loaded, cfg)
    digest = g.matrixio.file_sha256(feat_file)
    cache = tmp_path / "knn.snpg"
    g.save_knn_cache(graph, cache, digest, cfg)
    back = g.load_knn_cache(cache, digest, cfg)
    assert np.array_equal(back.row_offsets, graph.row_offsets)
    assert np.array_equal(back.col_indices, graph.col_indices)
    assert np.array_equal(back.weights, graph.weights)
    with pytest.raises(ValidationError, match="mismatch"):
        g.load_knn_cache(cache, digest, g.KnnConfig(k=4, seed=2))
    with pytest.raises(ValidationError, match="mismatch"):
        g.load_knn_cache(cache, b"\x00" * 32, cfg)
