import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crocs.analysis import (cut_tree, hac, kmeans, kmeans_label_transfer, pca_2d, purity,
                            write_dendrogram_csv)


class TestKMeans:
    def test_k_equals_n(self):
        X = np.random.default_rng(0).standard_normal((6, 3))
        res = kmeans(X, 6, seed=1)
        assert res.inertia == 0.0
        assert sorted(res.assignments.tolist()) == list(range(6))

    def test_two_pairs(self):
        # Lloyd's finds the midpoints whenever the random start draws one point per pair
        X = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        hits = 0
        for seed in range(20):
            start = np.random.default_rng(seed).choice(4, size=2, replace=False)
            if len({i // 2 for i in start}) < 2:
                continue
            hits += 1
            res = kmeans(X, 2, seed=seed)
            cents = sorted(map(tuple, res.centroids))
            assert cents == [(0.0, 0.5), (10.0, 0.5)]
            assert res.inertia == pytest.approx(1.0)
        assert hits >= 5

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 2)), 4)
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 2)), 0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 8))
    def test_monotone_and_fixed_point(self, seed, k):
        rng = np.random.default_rng(seed)
        X = np.vstack([rng.normal(c, 0.5, (10, 2)) for c in rng.uniform(-5, 5, (3, 2))])
        res = kmeans(X, k, seed=seed, max_iters=500)
        h = res.history
        assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))
        d = ((X[:, None, :] - res.centroids[None]) ** 2).sum(axis=2)
        np.testing.assert_array_equal(d.argmin(axis=1), res.assignments)
        for j in range(k):
            np.testing.assert_allclose(res.centroids[j], X[res.assignments == j].mean(axis=0))

    def test_empty_cluster_reseeded(self):
        # duplicate initial points would leave a cluster empty
        X = np.array([[0.0], [0.0], [0.0], [5.0]])
        res = kmeans(X, 2, seed=0)
        assert set(res.assignments.tolist()) == {0, 1}
        assert res.inertia == 0.0

    def test_deterministic(self):
        X = np.random.default_rng(1).standard_normal((40, 3))
        a, b = kmeans(X, 4, seed=3), kmeans(X, 4, seed=3)
        assert a.centroids.tobytes() == b.centroids.tobytes()

    def test_label_transfer(self):
        X = np.array([[0.0], [0.1], [0.2], [9.0], [9.1]])
        y = [3, 3, 1, 7, 7]
        pred = kmeans_label_transfer(X, y, np.array([[0.05], [8.0]]), 2, seed=0)
        assert pred.tolist() == [3, 7]


class TestHAC:
    def test_two_points(self):
        d = hac(np.array([[0.0, 0.0], [3.0, 4.0]]))
        assert d.merges == [(0, 1, 5.0, 2)]

    def test_collinear(self):
        d = hac(np.array([[0.0], [1.0], [10.0]]))
        assert d.merges[0] == (0, 1, 1.0, 2)
        assert d.merges[1] == (2, 3, pytest.approx(9.5), 3)

    def test_ties_lowest_pair(self):
        d = hac(np.array([[0.0], [1.0], [2.0], [3.0]]))
        assert d.merges[0][:2] == (0, 1)
        assert d.merges[1][:2] == (2, 3)

    def test_too_few(self):
        with pytest.raises(ValueError):
            hac(np.zeros((1, 3)))
        with pytest.raises(ValueError):
            hac(np.zeros((3, 3)), linkage="ward")

    @pytest.mark.parametrize("method", ["average", "single", "complete"])
    def test_matches_scipy(self, method):
        hier = pytest.importorskip("scipy.cluster.hierarchy")
        rng = np.random.default_rng(4)
        for _ in range(10):
            X = rng.standard_normal((int(rng.integers(2, 25)), 4))
            ours = hac(X, linkage=method).to_linkage()
            ref = hier.linkage(X, method=method)
            np.testing.assert_allclose(ours[:, 2], ref[:, 2], atol=1e-12)
            np.testing.assert_array_equal(ours[:, 3], ref[:, 3])
            for r, (a, b) in zip(ref, ours[:, :2]):
                assert {a, b} == {r[0], r[1]}

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 30))
    def test_monotone_heights(self, seed, n):
        X = np.random.default_rng(seed).standard_normal((n, 3))
        d = hac(X)
        assert len(d.merges) == n - 1
        h = d.heights()
        assert np.all(np.diff(h) >= -1e-12)
        assert sorted(d.leaf_order()) == list(range(n))

    def test_cut_and_purity(self):
        X = np.array([[0.0], [0.1], [5.0], [5.1], [9.0]])
        d = hac(X, labels="abcde")
        assert cut_tree(d, 3).tolist() == [0, 0, 1, 1, 2]
        assert cut_tree(d, 1).tolist() == [0] * 5
        assert cut_tree(d, 5).tolist() == [0, 1, 2, 3, 4]
        assert purity(cut_tree(d, 2), [0, 0, 1, 1, 1]) == 1.0
        assert purity(np.array([0, 0, 0, 0]), [0, 0, 1, 2]) == 0.5
        with pytest.raises(ValueError):
            cut_tree(d, 6)

    def test_feature_clustering(self):
        # columns of a matrix are clustered by passing the transpose
        M = np.array([[1.0, 1.1, 9.0], [2.0, 2.1, -4.0]])
        assert hac(M.T).merges[0][:2] == (0, 1)

    def test_csv(self, tmp_path):
        d = hac(np.array([[0.0], [1.0], [10.0]]), labels=["x", "y", "z"])
        write_dendrogram_csv(d, tmp_path / "m.csv", tmp_path / "l.csv")
        rows = list(csv.reader(open(tmp_path / "m.csv")))
        assert rows[0] == ["step", "left", "right", "height", "size"]
        assert rows[1] == ["0", "0", "1", "1.0", "2"]
        leaves = list(csv.reader(open(tmp_path / "l.csv")))
        assert leaves[0] == ["leaf", "label", "position"]
        order = d.leaf_order()
        assert leaves[1:] == [[str(i), "xyz"[i], str(order.index(i))] for i in range(3)]


class TestPCA:
    def test_line(self):
        t = np.linspace(-1, 1, 20)
        X = np.outer(t, [1.0, 2.0, -1.0]) + 3.0
        p = pca_2d(X)
        assert p.explained[0] == pytest.approx(1.0, abs=1e-12)
        assert np.abs(p.coords[:, 1]).max() < 1e-9

    def test_isotropic(self):
        X = np.random.default_rng(0).standard_normal((20_000, 4))
        p = pca_2d(X)
        np.testing.assert_allclose(p.explained, 0.25, atol=0.02)

    @pytest.mark.parametrize("seed", range(10))
    def test_eigendecomposition_oracle(self, seed):
        X = np.random.default_rng(seed).standard_normal((10, 5))
        p = pca_2d(X, seed=seed)
        Xc = X - X.mean(axis=0)
        vals, vecs = np.linalg.eigh(Xc.T @ Xc / 9)
        top = vecs[:, ::-1][:, :2]
        np.testing.assert_allclose(p.coords @ p.components, Xc @ top @ top.T, atol=1e-6)
        np.testing.assert_allclose(p.explained, vals[::-1][:2] / vals.sum(), atol=1e-8)
        np.testing.assert_allclose(p.components @ p.components.T, np.eye(2), atol=1e-8)

    def test_constant_and_small(self):
        p = pca_2d(np.ones((5, 3)))
        assert not p.coords.any() and not p.explained.any()
        with pytest.raises(ValueError):
            pca_2d(np.zeros((2, 3)))
