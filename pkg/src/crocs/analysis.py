"""k-means baseline, agglomerative clustering of prototypes, and 2-D PCA."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .prototypes import pairwise_euclidean


# --- k-means ----------------------------------------------------------------

@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    history: list[float]


def _inertia(points, centroids, labels) -> float:
    diff = points - centroids[labels]
    return float((diff * diff).sum())


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iters: int = 100) -> KMeansResult:
    """Lloyd's algorithm from k distinct random points.

    A cluster that loses all members is reseeded at the point farthest from
    its current centroid.  ``history`` records the inertia after each
    assignment step.
    """
    X = np.asarray(points, dtype=float)
    n = len(X)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    C = X[rng.choice(n, size=k, replace=False)].copy()
    labels = None
    history = []
    for _ in range(max_iters):
        d = pairwise_euclidean(X, C)
        new = d.argmin(axis=1)
        history.append(_inertia(X, C, new))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        own = d[np.arange(n), labels]
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
            else:
                far = int(own.argmax())
                C[j] = X[far]
                labels[far] = j
                own[far] = 0.0
    return KMeansResult(C, labels, _inertia(X, C, labels), history)


def kmeans_label_transfer(train_points, train_labels, test_points, k: int, seed: int = 0,
                          max_iters: int = 100) -> np.ndarray:
    """Fit k-means on ``train_points``, name each cluster by its majority label,
    and label ``test_points`` by nearest centroid.

    Majority ties go to the smallest label; clusters left empty never win.
    """
    res = kmeans(train_points, k, seed, max_iters)
    train_labels = np.asarray(train_labels)
    names = np.full(k, -1)
    for j in range(k):
        members = train_labels[res.assignments == j]
        if members.size:
            vals, counts = np.unique(members, return_counts=True)
            names[j] = vals[counts.argmax()]
    d = pairwise_euclidean(np.asarray(test_points, dtype=float), res.centroids)
    d[:, names < 0] = np.inf
    return names[d.argmin(axis=1)]


# --- hierarchical agglomerative clustering ---------------------------------

@dataclass
class Dendrogram:
    """Merge table in the usual convention: leaves are 0..n-1 and merge ``i``
    creates node ``n + i``."""

    merges: list[tuple[int, int, float, int]]
    labels: list[str]

    @property
    def n_leaves(self) -> int:
        return len(self.merges) + 1

    def heights(self) -> np.ndarray:
        return np.array([m[2] for m in self.merges])

    def to_linkage(self) -> np.ndarray:
        return np.array([[a, b, h, s] for a, b, h, s in self.merges], dtype=float)

    def leaf_order(self) -> list[int]:
        n = self.n_leaves
        if n == 1:
            return [0]
        children = {n + i: (a, b) for i, (a, b, _, _) in enumerate(self.merges)}
        out, stack = [], [n + len(self.merges) - 1]
        while stack:
            node = stack.pop()
            if node < n:
                out.append(node)
            else:
                a, b = children[node]
                stack += [b, a]
        return out


def hac(points: np.ndarray, linkage: str = "average", metric: str = "euclidean",
        labels: Optional[Sequence[str]] = None) -> Dendrogram:
    """Agglomerative clustering of rows of ``points``.

    Pass ``points.T`` to cluster features instead of prototypes.  Ties pick
    the pair with the lowest (smaller, larger) node ids.
    """
    if linkage not in ("average", "single", "complete"):
        raise ValueError(f"unsupported linkage {linkage!r}")
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    X = np.asarray(points, dtype=float)
    n = len(X)
    if n < 2:
        raise ValueError("need at least 2 points to cluster")
    total = 2 * n - 1
    Dm = np.full((total, total), np.inf)
    Dm[:n, :n] = pairwise_euclidean(X, X)
    # only the strict upper triangle (i < j) is ever searched
    Dm[np.tril_indices(total)] = np.inf
    size = np.zeros(total, dtype=int)
    size[:n] = 1
    alive = np.zeros(total, bool)
    alive[:n] = True
    merges = []
    for step in range(n - 1):
        flat = int(np.argmin(Dm))  # row-major: lowest (a, b) among ties
        a, b = divmod(flat, total)
        h = float(Dm[a, b])
        new = n + step
        others = np.flatnonzero(alive)
        others = others[(others != a) & (others != b)]
        da = np.minimum(Dm[a, others], Dm[others, a])
        db = np.minimum(Dm[b, others], Dm[others, b])
        if linkage == "average":
            dn = (size[a] * da + size[b] * db) / (size[a] + size[b])
        elif linkage == "single":
            dn = np.minimum(da, db)
        else:
            dn = np.maximum(da, db)
        Dm[others, new] = dn
        for node in (a, b):
            Dm[node, :] = np.inf
            Dm[:, node] = np.inf
            alive[node] = False
        alive[new] = True
        size[new] = size[a] + size[b]
        merges.append((a, b, h, int(size[new])))
    names = [str(i) for i in range(n)] if labels is None else [str(x) for x in labels]
    return Dendrogram(merges, names)


def cut_tree(dendro: Dendrogram, n_clusters: int) -> np.ndarray:
    """Flat cluster ids (0..n_clusters-1, numbered by first leaf) after
    undoing the last ``n_clusters - 1`` merges."""
    n = dendro.n_leaves
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must lie in [1, {n}]")
    parent = list(range(2 * n - 1))
    for i, (a, b, _, _) in enumerate(dendro.merges[:n - n_clusters]):
        parent[a] = parent[b] = n + i

    def root(x):
        while parent[x] != x:
            x = parent[x]
        return x

    roots = [root(i) for i in range(n)]
    ids: dict[int, int] = {}
    return np.array([ids.setdefault(r, len(ids)) for r in roots])


def purity(clusters: np.ndarray, labels: Sequence[int]) -> float:
    """Fraction of items carrying their cluster's majority label."""
    labels = np.asarray(labels)
    total = 0
    for c in np.unique(clusters):
        _, counts = np.unique(labels[clusters == c], return_counts=True)
        total += counts.max()
    return total / len(labels)


def write_dendrogram_csv(dendro: Dendrogram, path, leaves_path=None) -> None:
    """Merge table (scipy linkage order); optionally a leaf table with labels and plot order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "left", "right", "height", "size"])
        for i, (a, b, h, s) in enumerate(dendro.merges):
            w.writerow([i, a, b, repr(float(h)), s])
    if leaves_path is None:
        return
    position = {leaf: i for i, leaf in enumerate(dendro.leaf_order())}
    with open(leaves_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["leaf", "label", "position"])
        for i in range(dendro.n_leaves):
            w.writerow([i, dendro.labels[i] if dendro.labels else i, position[i]])


# --- PCA ---------------------------------------------------------------------

@dataclass
class Projection:
    coords: np.ndarray
    components: np.ndarray
    explained: np.ndarray


def _power_iteration(C: np.ndarray, rng: np.random.Generator, iters: int = 5000, tol: float = 1e-14):
    v = rng.standard_normal(C.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = C @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return np.zeros_like(v), 0.0
        w /= norm
        # fix the sign so the vector is comparable between iterations
        if w[np.argmax(np.abs(w))] < 0:
            w = -w
        done = np.linalg.norm(w - v) < tol
        v = w
        lam = float(v @ C @ v)
        if done:
            break
    return v, lam


def pca_2d(points: np.ndarray, seed: int = 0) -> Projection:
    """Top-2 principal directions by power iteration with deflation.

    A second direction with (numerically) zero variance comes back as a zero
    component, which projects everything to 0.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or len(X) < 3:
        raise ValueError("pca_2d needs at least 3 points")
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / (len(X) - 1)
    total = float(np.trace(C))
    rng = np.random.default_rng(seed)
    comps, lams = [], []
    deflated = C.copy()
    for _ in range(2):
        v, lam = _power_iteration(deflated, rng)
        if total == 0 or lam <= 1e-12 * max(total, 1e-300):
            v, lam = np.zeros(C.shape[0]), 0.0
        comps.append(v)
        lams.append(lam)
        deflated = deflated - lam * np.outer(v, v)
    W = np.vstack(comps)
    explained = np.array(lams) / total if total > 0 else np.zeros(2)
    return Projection(Xc @ W.T, W, explained)
