"""Attribute accuracy, adjusted mutual information and attribute-match P@K."""

from __future__ import annotations

from math import lgamma, log
from typing import Sequence

import numpy as np

from .attributes import AttributeSet, match_count
from .inference import RetrievalResult

# (label, minimum number of matching attributes); "=3" is the exact match
THRESHOLDS = {">=1": 1, ">=2": 2, "=3": 3}


def _labels(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError("label vectors must be one-dimensional")
    return arr


def accuracy(truth, assigned) -> float:
    t, a = _labels(truth), _labels(assigned)
    if t.shape != a.shape:
        raise ValueError(f"length mismatch: {t.size} vs {a.size}")
    if t.size == 0:
        raise ValueError("accuracy of an empty labelling is undefined")
    return float(np.mean(t == a))


def contingency(truth, assigned) -> np.ndarray:
    _, ti = np.unique(_labels(truth), return_inverse=True)
    _, ai = np.unique(_labels(assigned), return_inverse=True)
    table = np.zeros((ti.max() + 1, ai.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, ai), 1)
    return table


def entropy(labels) -> float:
    _, counts = np.unique(_labels(labels), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_info(table: np.ndarray) -> float:
    n = table.sum()
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    nz = np.nonzero(table)
    nij = table[nz].astype(float)
    return float((nij / n * np.log(n * nij / (a[nz[0]] * b[nz[1]]))).sum())


def expected_mutual_info(table: np.ndarray) -> float:
    """E[MI] under the permutation model with both marginals fixed."""
    n = int(table.sum())
    a = table.sum(axis=1).astype(int)
    b = table.sum(axis=0).astype(int)
    lg = [lgamma(k + 1) for k in range(n + 1)]
    emi = 0.0
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            for nij in range(lo, hi + 1):
                log_p = (lg[ai] + lg[bj] + lg[n - ai] + lg[n - bj]
                         - lg[n] - lg[nij] - lg[ai - nij] - lg[bj - nij] - lg[n - ai - bj + nij])
                emi += nij / n * log(n * nij / (ai * bj)) * np.exp(log_p)
    return float(emi)


def ami(truth, assigned) -> float:
    """Adjusted mutual information with the arithmetic-mean entropy normaliser.

    Natural logs.  Returns 0 when the normaliser minus E[MI] vanishes (both
    labellings constant, or both one instance per label).
    """
    t, a = _labels(truth), _labels(assigned)
    if t.shape != a.shape:
        raise ValueError(f"length mismatch: {t.size} vs {a.size}")
    if t.size < 2:
        raise ValueError("AMI needs at least two instances")
    table = contingency(t, a)
    mi = mutual_info(table)
    emi = expected_mutual_info(table)
    denom = 0.5 * (entropy(t) + entropy(a)) - emi
    # exactly zero in exact arithmetic when both labellings are constant or
    # both are all-distinct; the float value is only rounding noise
    if abs(denom) < 1e-12:
        return 0.0
    return float((mi - emi) / denom)


def precision_at_k(retrieval: RetrievalResult, truth_attrs: dict[int, AttributeSet] | Sequence[AttributeSet],
                   query_attrs: Sequence[AttributeSet], K: int, threshold: str) -> float:
    """Fraction of queries whose top-K hits hold at least one relevant instance.

    ``truth_attrs`` maps instance id -> attributes (a sequence is indexed by
    id).  ``query_attrs[q]`` belongs to ``retrieval.query_index[q]``'s query
    and must align with ``retrieval.hits``.
    """
    need = THRESHOLDS[threshold]
    if K < 1:
        raise ValueError("K must be at least 1")
    if len(query_attrs) != len(retrieval.hits):
        raise ValueError("one query attribute set per retrieval list is required")
    if not retrieval.hits:
        raise ValueError("no queries to evaluate")
    if not isinstance(truth_attrs, dict):
        truth_attrs = dict(enumerate(truth_attrs))
    hits = 0
    for q, lst in enumerate(retrieval.hits):
        for iid, _ in lst[:K]:
            try:
                truth = truth_attrs[iid]
            except KeyError:
                raise ValueError(f"unknown instance id {iid}") from None
            if match_count(truth, query_attrs[q]) >= need:
                hits += 1
                break
    return hits / len(retrieval.hits)


def precision_report(retrieval: RetrievalResult, truth_attrs, query_attrs, ks=(1, 5, 10),
                     thresholds=tuple(THRESHOLDS)) -> dict[tuple[str, int], float]:
    return {(th, k): precision_at_k(retrieval, truth_attrs, query_attrs, k, th)
            for th in thresholds for k in ks}
