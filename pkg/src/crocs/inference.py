"""Deploying trained prototypes as cluster centroids and retrieval queries.

Training scores cosine similarity while inference ranks by Euclidean
distance.  With ``normalize=True`` (the default) both embeddings and
prototypes are put on the unit sphere first, where the two orderings agree.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .attributes import AttributeSet, AttributeSpace
from .data import Segment, signal_matrix
from .encoder import EVAL, EncoderParams, forward
from .prototypes import PrototypeBank, normalize_rows, pairwise_euclidean


@dataclass
class AssignmentResult:
    index: np.ndarray
    distance: np.ndarray
    attrs: list[AttributeSet]

    def attribute(self, name: str) -> np.ndarray:
        return np.array([getattr(a, name) for a in self.attrs], dtype=int)


@dataclass
class RetrievalResult:
    # hits[q] is a list of (instance_id, distance), ascending
    hits: list[list[tuple[int, float]]]
    query_index: list[int]

    def ids(self, q: int) -> list[int]:
        return [i for i, _ in self.hits[q]]


def embed_all(params: EncoderParams, data: Union[Sequence[Segment], np.ndarray], batch_size: int = 512) -> np.ndarray:
    if params.mode != EVAL:
        raise ValueError("embed_all requires the encoder in EVAL mode")
    X = data if isinstance(data, np.ndarray) else signal_matrix(list(data))
    if len(X) == 0:
        return np.zeros((0, params.E))
    out = [forward(params, X[i:i + batch_size])[0] for i in range(0, len(X), batch_size)]
    return np.vstack(out)


def _prep(x: np.ndarray, normalize: bool, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return normalize_rows(x, what)[0] if normalize else x


def _queries(q) -> np.ndarray:
    return q.matrix if isinstance(q, PrototypeBank) else np.asarray(q, dtype=float)


def cluster_assign(embeddings: np.ndarray, bank: PrototypeBank, normalize: bool = True,
                   centroids: Optional[np.ndarray] = None,
                   centroid_mask: Optional[np.ndarray] = None) -> AssignmentResult:
    """Nearest prototype per embedding; ties go to the lowest prototype index.

    ``centroids`` substitutes other centroids (e.g. traditional prototypes)
    in the bank's combination order; rows with ``centroid_mask`` False are
    never chosen.
    """
    C = bank.matrix if centroids is None else np.asarray(centroids, dtype=float)
    if embeddings.shape[1] != C.shape[1]:
        raise ValueError(f"embedding dim {embeddings.shape[1]} != prototype dim {C.shape[1]}")
    allowed = np.ones(len(C), bool) if centroid_mask is None else np.asarray(centroid_mask, bool)
    if not allowed.any():
        raise ValueError("no centroid available")
    V = _prep(embeddings, normalize, "embedding")
    P = np.zeros_like(C)
    P[allowed] = _prep(C[allowed], normalize, "prototype row")
    d = pairwise_euclidean(V, P)
    d[:, ~allowed] = np.inf
    idx = d.argmin(axis=1)  # first minimum -> lowest index
    return AssignmentResult(idx, d[np.arange(len(idx)), idx], [bank.combos[j] for j in idx])


def retrieve_topk(queries, embeddings: np.ndarray, K: int, normalize: bool = True,
                  instance_ids: Optional[Sequence[int]] = None,
                  query_mask: Optional[np.ndarray] = None) -> RetrievalResult:
    """K nearest embeddings per query row, ascending; ties by lowest instance id."""
    if K < 1:
        raise ValueError("K must be at least 1")
    Q = _queries(queries)
    ids = np.arange(len(embeddings)) if instance_ids is None else np.asarray(instance_ids)
    active = np.flatnonzero(np.ones(len(Q), bool) if query_mask is None else np.asarray(query_mask, bool))
    hits = []
    if len(embeddings) == 0:
        return RetrievalResult([[] for _ in active], active.tolist())
    V = _prep(embeddings, normalize, "embedding")
    P = _prep(Q[active], normalize, "query")
    d = pairwise_euclidean(P, V)
    for row in d:
        order = np.lexsort((ids, row))[:K]
        hits.append([(int(ids[i]), float(row[i])) for i in order])
    return RetrievalResult(hits, active.tolist())


def traditional_prototypes(embeddings: np.ndarray, attrs: Sequence[AttributeSet],
                           space: AttributeSpace) -> tuple[np.ndarray, np.ndarray]:
    """Per-combination mean embedding plus a mask of combinations that have members."""
    M, E = space.size, embeddings.shape[1]
    sums = np.zeros((M, E))
    counts = np.zeros(M, dtype=int)
    for v, a in zip(embeddings, attrs):
        j = space.index_of(a)
        sums[j] += v
        counts[j] += 1
    present = counts > 0
    rows = np.zeros((M, E))
    rows[present] = sums[present] / counts[present, None]
    return rows, present


def export_embeddings_csv(path, segments: Sequence[Segment], embeddings: np.ndarray) -> None:
    E = embeddings.shape[1] if embeddings.ndim == 2 else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", "patient_id", "class", "sex", "age_bin"] + [f"v_{i}" for i in range(E)])
        for s, v in zip(segments, embeddings):
            a = s.attrs.as_tuple() if s.attrs is not None else ("", "", "")
            w.writerow([s.instance_id, s.patient_id, *a] + [repr(float(x)) for x in v])

