"""The learnable prototype bank and its pairwise distance targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attributes import AttributeSet, AttributeSpace, enumerate_combinations, hamming_matrix


@dataclass
class PrototypeBank:
    """M free prototype rows, one per attribute combination (canonical order).

    Rows are not kept on the unit sphere; every consumer normalises first.
    """

    matrix: np.ndarray
    combos: list[AttributeSet]
    beta: float
    space: AttributeSpace

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.space.size:
            raise ValueError(f"bank needs {self.space.size} rows, got matrix of shape {self.matrix.shape}")
        if len(self.combos) != self.space.size:
            raise ValueError("combos must list every attribute combination")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    @property
    def E(self) -> int:
        return self.matrix.shape[1]

    def copy(self) -> "PrototypeBank":
        return PrototypeBank(self.matrix.copy(), list(self.combos), self.beta, self.space)


@dataclass(frozen=True)
class TargetDistanceMatrix:
    values: np.ndarray
    same_class_mask: np.ndarray


def init_prototypes(space: AttributeSpace, E: int, seed: int, beta: float = 0.2) -> PrototypeBank:
    if E < 2:
        raise ValueError(f"prototype dimension must be at least 2, got {E}")
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((space.size, E))
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    return PrototypeBank(m, enumerate_combinations(space), float(beta), space)


def same_class_mask(combos) -> np.ndarray:
    cls = np.array([c.class_id for c in combos])
    return cls[:, None] == cls[None, :]


def target_distances(bank: PrototypeBank) -> TargetDistanceMatrix:
    return TargetDistanceMatrix(bank.beta * hamming_matrix(bank.combos), same_class_mask(bank.combos))


def normalize_rows(x: np.ndarray, what: str = "row") -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalise rows; returns ``(unit_rows, norms)``."""
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ValueError(f"{what} {int(bad[0])} has zero norm")
    return x / norms[:, None], norms


def pairwise_euclidean(a: np.ndarray, b: np.ndarray, chunk_elems: int = 4_000_000) -> np.ndarray:
    # explicit differences (not the |a|^2+|b|^2-2ab expansion) so coincident
    # points give exactly 0 and symmetric ties stay exact
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty((len(a), len(b)))
    step = max(1, chunk_elems // max(1, len(b) * a.shape[1]))
    for i in range(0, len(a), step):
        diff = a[i:i + step, None, :] - b[None, :, :]
        out[i:i + step] = np.sqrt((diff * diff).sum(axis=2))
    return out


def empirical_distances(bank: PrototypeBank) -> np.ndarray:
    unit, _ = normalize_rows(bank.matrix, "prototype row")
    diff = unit[:, None, :] - unit[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(d, 0.0)
    return d
