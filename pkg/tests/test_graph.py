import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ugd.graph import (GraphError, build_graph, edge_set_difference, normalized_laplacian,
                       sym_norm_adj)
from ugd.io import decode_features, encode_features, read_graph, write_graph

from .helpers import random_graph


class TestBuildGraph:
    def test_dedup_and_self_loop_removal(self):
        g = build_graph([(0, 1), (1, 0), (1, 1)], np.zeros((2, 1)))
        assert g.edge_list() == [(0, 1)]

    def test_empty_edges(self):
        g = build_graph([], np.zeros((3, 2)))
        assert g.num_edges == 0
        assert g.degrees.tolist() == [0, 0, 0]

    def test_handshake(self):
        g = build_graph([(0, 1), (1, 2)], np.zeros((3, 1)))
        assert g.degrees.tolist() == [1, 2, 1]
        assert g.degrees.sum() == 2 * g.num_edges == 4

    def test_neighbors_sorted(self):
        g = build_graph([(3, 0), (0, 1), (2, 0)], np.zeros((4, 1)))
        assert g.neighbors(0).tolist() == [1, 2, 3]
        assert g.neighbors(3).tolist() == [0]

    @pytest.mark.parametrize("edges", [[(0, 5)], [(-1, 0)]])
    def test_out_of_range(self, edges):
        with pytest.raises(GraphError):
            build_graph(edges, np.zeros((3, 1)))

    def test_non_finite_features(self):
        X = np.zeros((2, 2))
        X[1, 0] = np.nan
        with pytest.raises(GraphError):
            build_graph([(0, 1)], X)

    def test_label_length_mismatch(self):
        with pytest.raises(GraphError):
            build_graph([], np.zeros((3, 1)), labels=[0, 1])

    def test_overlapping_masks(self):
        masks = {"train": [True, False], "val": [True, False]}
        with pytest.raises(GraphError):
            build_graph([], np.zeros((2, 1)), masks=masks)

    def test_immutable(self):
        g = build_graph([(0, 1)], np.zeros((2, 1)))
        with pytest.raises(ValueError):
            g.X[0, 0] = 1.0
        with pytest.raises(ValueError):
            g.edges[0, 0] = 1

    @given(st.integers(1, 20), st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, n, seed):
        g = random_graph(n, seed)
        again = build_graph(g.edge_list(), g.X)
        assert np.array_equal(g.edges, again.edges)
        assert np.array_equal(g.indptr, again.indptr)
        assert np.array_equal(g.indices, again.indices)

    @given(st.integers(1, 20), st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_neighbor_index_matches_edges(self, n, seed):
        g = random_graph(n, seed)
        rebuilt = {(min(u, int(v)), max(u, int(v))) for u in range(g.n) for v in g.neighbors(u)}
        assert rebuilt == set(g.edge_list())


class TestSymNormAdj:
    def test_isolated_node(self):
        a = sym_norm_adj(build_graph([], np.zeros((1, 1)))).toarray()
        assert a[0, 0] == pytest.approx(1.0)

    def test_single_edge(self):
        a = sym_norm_adj(build_graph([(0, 1)], np.zeros((2, 1)))).toarray()
        np.testing.assert_allclose(a, np.full((2, 2), 0.5))

    def test_triangle(self):
        a = sym_norm_adj(build_graph([(0, 1), (1, 2), (0, 2)], np.zeros((3, 1)))).toarray()
        np.testing.assert_allclose(a, np.full((3, 3), 1 / 3))

    @pytest.mark.parametrize("seed", range(10))
    def test_symmetric_and_row_sums(self, seed):
        g = random_graph(15, seed)
        a = sym_norm_adj(g).toarray()
        assert np.max(np.abs(a - a.T)) <= 1e-12
        unnorm = g.adjacency().toarray() + np.eye(g.n)
        np.testing.assert_array_equal(unnorm.sum(axis=1), g.degrees + 1)
        d = np.sqrt(g.degrees + 1.0)
        np.testing.assert_allclose(a * np.outer(d, d), unnorm, atol=1e-12)


class TestLaplacian:
    def test_single_edge(self):
        L = normalized_laplacian(build_graph([(0, 1)], np.zeros((2, 1)))).toarray()
        np.testing.assert_allclose(L, [[1, -1], [-1, 1]])

    def test_no_edges_is_identity(self):
        L = normalized_laplacian(build_graph([], np.zeros((2, 1)))).toarray()
        np.testing.assert_allclose(L, np.eye(2))

    def test_path(self):
        L = normalized_laplacian(build_graph([(0, 1), (1, 2)], np.zeros((3, 1)))).toarray()
        assert L[0, 1] == pytest.approx(-1 / np.sqrt(2))
        assert L[1, 2] == pytest.approx(-1 / np.sqrt(2))
        assert L[0, 2] == 0.0
        np.testing.assert_allclose(np.diag(L), 1.0)

    def test_psd_on_random_vectors(self):
        rng = np.random.default_rng(0)
        for trial in range(100):
            g = random_graph(int(rng.integers(1, 21)), trial)
            L = normalized_laplacian(g)
            x = rng.standard_normal(g.n)
            assert x @ (L @ x) >= -1e-10

    @pytest.mark.parametrize("seed", range(20))
    def test_trace_matches_pairwise_sum(self, seed):
        # Isolated nodes add ||x_v||^2 through L's unit diagonal but have no
        # pair terms, so the identity is checked on their complement.
        g = random_graph(12, seed, p=0.4)
        X = np.random.default_rng(seed).standard_normal((g.n, 3))
        X[g.degrees == 0] = 0.0
        L = normalized_laplacian(g)
        trace = np.trace(X.T @ (L @ X))
        deg = g.degrees
        pair = 0.0
        for v in range(g.n):
            for u in g.neighbors(v):
                diff = X[u] / np.sqrt(deg[u]) - X[v] / np.sqrt(deg[v])
                pair += 0.5 * diff @ diff
        assert trace == pytest.approx(pair, rel=1e-8, abs=1e-12)


class TestEdgeSetDifference:
    def test_identical(self):
        assert edge_set_difference({(0, 1)}, {(0, 1)}) == 0

    def test_one_removed(self):
        assert edge_set_difference({(0, 1), (1, 2)}, {(0, 1)}) == 1

    def test_disjoint(self):
        assert edge_set_difference(set(), {(0, 1), (2, 3)}) == 2

    def test_orientation_ignored(self):
        assert edge_set_difference({(1, 0)}, {(0, 1)}) == 0

    def test_arrays(self):
        a = np.array([[0, 1], [1, 2]])
        assert edge_set_difference(a, a[:1]) == 1


class TestFileFormat:
    def test_feature_header(self):
        X = np.arange(6, dtype=np.float64).reshape(2, 3)
        data = encode_features(X)
        assert data[:4] == b"UGDF"
        assert int.from_bytes(data[4:8], "little") == 1
        assert int.from_bytes(data[8:16], "little") == 2
        assert int.from_bytes(data[16:24], "little") == 3
        assert len(data) == 24 + 4 * 6
        np.testing.assert_array_equal(decode_features(data), X)

    def test_bad_magic(self):
        data = bytearray(encode_features(np.zeros((1, 1))))
        data[:4] = b"XXXX"
        with pytest.raises(GraphError):
            decode_features(bytes(data))

    def test_truncated(self):
        with pytest.raises(GraphError):
            decode_features(encode_features(np.zeros((2, 2)))[:-1])

    def test_graph_round_trip(self, tmp_path):
        X = np.arange(8, dtype=np.float32).reshape(4, 2)
        masks = {"train": [1, 0, 0, 0], "val": [0, 1, 0, 0], "test": [0, 0, 1, 0]}
        g = build_graph([(0, 1), (2, 3)], X, labels=[0, 1, 0, 1], masks=masks)
        write_graph(tmp_path, g)
        assert (tmp_path / "graph.edges").read_text() == "0\t1\n2\t3\n"
        assert (tmp_path / "graph.masks").read_text().split() == ["train", "val", "test", "none"]
        h = read_graph(tmp_path)
        assert np.array_equal(h.edges, g.edges)
        np.testing.assert_array_equal(h.X, g.X)
        assert h.labels.tolist() == [0, 1, 0, 1]
        assert h.mask("test").tolist() == [False, False, True, False]
