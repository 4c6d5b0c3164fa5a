"""Clustering and retrieval evaluation of a trained encoder + prototype bank.

Shared by the ``eval`` subcommand and the acceptance tests.  Report rows are
plain tuples so they serialise deterministically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analysis import kmeans_label_transfer
from .attributes import enumerate_combinations
from .data import TRAIN, Dataset, signal_matrix
from .encoder import EncoderParams
from .inference import AssignmentResult, cluster_assign, embed_all, retrieve_topk, traditional_prototypes
from .metrics import THRESHOLDS, accuracy, ami, precision_report
from .prototypes import PrototypeBank

ATTRIBUTES = (("class", "class_id"), ("sex", "sex_id"), ("age", "age_bin"))
QUERIES = ("cp", "tp")


@dataclass
class EvalReport:
    clustering: list[tuple[str, str, float]]
    retrieval: list[tuple[str, int, float]]
    extra: dict = field(default_factory=dict)

    def value(self, attribute: str, metric: str) -> float:
        for a, m, v in self.clustering:
            if a == attribute and m == metric:
                return v
        raise KeyError((attribute, metric))

    def precision(self, threshold: str, k: int) -> float:
        for th, kk, v in self.retrieval:
            if th == threshold and kk == k:
                return v
        raise KeyError((threshold, k))


def clustering_rows(truth_attrs, assigned_attrs) -> list[tuple[str, str, float]]:
    rows = []
    for name, field_ in ATTRIBUTES:
        t = np.array([getattr(a, field_) for a in truth_attrs])
        p = np.array([getattr(a, field_) for a in assigned_attrs])
        rows.append((name, "acc", accuracy(t, p)))
        rows.append((name, "ami", ami(t, p)))
    return rows


def evaluate(params: EncoderParams, bank: PrototypeBank, dataset: Dataset, split: str = "val",
             query: str = "cp", ks: Sequence[int] = (1, 5, 10),
             thresholds: Sequence[str] = tuple(THRESHOLDS), normalize: bool = True) -> EvalReport:
    """Cluster and retrieve the labelled ``split`` segments.

    ``query="cp"`` uses the learned prototypes; ``"tp"`` uses per-combination
    mean embeddings of the labelled training split (combinations without
    training members are skipped).
    """
    if query not in QUERIES:
        raise ValueError(f"query must be one of {QUERIES}")
    params.eval()
    segs = dataset.select(split, labelled=True)
    if not segs:
        raise ValueError(f"no labelled segments in split {split!r}")
    truth = [s.attrs for s in segs]
    V = embed_all(params, segs)
    if query == "cp":
        centroids, mask = bank.matrix, np.ones(bank.M, bool)
    else:
        train = dataset.select(TRAIN, labelled=True)
        centroids, mask = traditional_prototypes(embed_all(params, train), [s.attrs for s in train], bank.space)
    assigned: AssignmentResult = cluster_assign(V, bank, normalize, centroids=centroids, centroid_mask=mask)
    ret = retrieve_topk(centroids, V, max(ks), normalize, instance_ids=[s.instance_id for s in segs],
                        query_mask=mask)
    truth_by_id = {s.instance_id: s.attrs for s in segs}
    qattrs = [bank.combos[j] for j in ret.query_index]
    table = precision_report(ret, truth_by_id, qattrs, ks, thresholds)
    retrieval = [(th, k, table[(th, k)]) for th in thresholds for k in ks]
    return EvalReport(clustering_rows(truth, assigned.attrs), retrieval,
                      {"embeddings": V, "segments": segs, "assignment": assigned, "centroids": centroids,
                       "centroid_mask": mask})


def kmeans_baseline(dataset: Dataset, split: str = "val", seed: int = 0,
                    params: Optional[EncoderParams] = None, max_iters: int = 100) -> list[tuple[str, str, float]]:
    """k-means with k = M fitted on the labelled training split.

    Raw signals by default; pass ``params`` to cluster learned embeddings
    instead.  Each centroid inherits the majority attribute combination of
    its training members and held-out segments inherit from the nearest
    centroid.
    """
    train = dataset.select(TRAIN, labelled=True)
    held = dataset.select(split, labelled=True)
    space = dataset.space
    if params is None:
        Xtr, Xte = signal_matrix(train), signal_matrix(held)
    else:
        params.eval()
        Xtr, Xte = embed_all(params, train), embed_all(params, held)
    combo_ids = [space.index_of(s.attrs) for s in train]
    pred = kmeans_label_transfer(Xtr, combo_ids, Xte, min(space.size, len(train)), seed, max_iters)
    combos = enumerate_combinations(space)
    return clustering_rows([s.attrs for s in held], [combos[j] for j in pred])


# --- CSV -------------------------------------------------------------------

def _cell(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_rows(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])


def write_clustering_csv(path, rows) -> None:
    write_rows(path, ["attribute", "metric", "value"], rows)


def write_retrieval_csv(path, rows) -> None:
    write_rows(path, ["threshold", "K", "value"], rows)


def summarize(per_seed: list[list[tuple]]) -> list[tuple]:
    """Mean and sample SD of the last column across seeds, keyed by the other columns."""
    keys = [row[:-1] for row in per_seed[0]]
    out = []
    for i, key in enumerate(keys):
        vals = np.array([rows[i][-1] for rows in per_seed], dtype=float)
        sd = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append((*key, float(vals.mean()), sd))
    return out
