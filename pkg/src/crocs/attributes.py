"""Discrete patient attributes: (class, sex, age-bin) triples and their scores.

Every prototype stands for one combination of attribute values.  The
combinations are enumerated lexicographically (class major, then sex, then
age bin) and index ``j`` of that list is the canonical prototype index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

# Sentinel for the uniform-attraction limit tau_omega -> infinity.  Every
# match score is exactly zero under it, so same-class weights are exactly
# uniform.
INFINITE = math.inf


@dataclass(frozen=True)
class AttributeSpace:
    class_count: int
    sex_count: int = 2
    age_bin_count: int = 4

    def __post_init__(self):
        for name in ("class_count", "sex_count", "age_bin_count"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def size(self) -> int:
        """Number of attribute combinations, i.e. the number of prototypes M."""
        return self.class_count * self.sex_count * self.age_bin_count

    def index_of(self, attrs: "AttributeSet") -> int:
        self.check(attrs)
        return (attrs.class_id * self.sex_count + attrs.sex_id) * self.age_bin_count + attrs.age_bin

    def check(self, attrs: "AttributeSet") -> None:
        if attrs.space is not None and attrs.space != self:
            raise ValueError(f"{attrs} belongs to {attrs.space}, not {self}")
        if not (0 <= attrs.class_id < self.class_count
                and 0 <= attrs.sex_id < self.sex_count
                and 0 <= attrs.age_bin < self.age_bin_count):
            raise ValueError(f"{attrs} is out of bounds for {self}")

    def make(self, class_id: int, sex_id: int, age_bin: int) -> "AttributeSet":
        attrs = AttributeSet(int(class_id), int(sex_id), int(age_bin), space=self)
        self.check(attrs)
        return attrs


@dataclass(frozen=True)
class AttributeSet:
    """One (class, sex, age-bin) triple.

    ``space`` is bookkeeping only: it is excluded from equality and hashing,
    so two sets are equal iff their three indices are equal.
    """

    class_id: int
    sex_id: int
    age_bin: int
    space: Optional[AttributeSpace] = field(default=None, compare=False, repr=False)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.class_id, self.sex_id, self.age_bin)


def enumerate_combinations(space: AttributeSpace) -> list[AttributeSet]:
    return [
        AttributeSet(c, s, a, space=space)
        for c in range(space.class_count)
        for s in range(space.sex_count)
        for a in range(space.age_bin_count)
    ]


def _check_same_space(a: AttributeSet, b: AttributeSet) -> None:
    if a.space is not None and b.space is not None and a.space != b.space:
        raise ValueError(f"attribute sets come from different spaces: {a.space} vs {b.space}")


def match_count(a: AttributeSet, b: AttributeSet) -> int:
    """Number of attributes on which ``a`` and ``b`` agree (0..3)."""
    _check_same_space(a, b)
    return int(a.class_id == b.class_id) + int(a.sex_id == b.sex_id) + int(a.age_bin == b.age_bin)


def hamming(a: AttributeSet, b: AttributeSet) -> int:
    return 3 - match_count(a, b)


def _check_tau(tau_omega: float) -> None:
    if tau_omega != INFINITE and not tau_omega > 0:
        raise ValueError(f"tau_omega must be positive or INFINITE, got {tau_omega!r}")


def match_score(a: AttributeSet, b: AttributeSet, tau_omega: float) -> float:
    _check_tau(tau_omega)
    if tau_omega == INFINITE:
        return 0.0
    return match_count(a, b) / tau_omega


def attraction_weights(a: AttributeSet, space: AttributeSpace, tau_omega: float) -> np.ndarray:
    """Softmax of match scores over the prototypes sharing ``a``'s class.

    The published normaliser indexes the numerator's ``j`` inside the sum over
    ``l``; it is read here as a sum over ``q(a, A_l)``, the only reading under
    which the weights form a distribution.  The exact-match prototype is part
    of the same-class set and so contributes to the denominator.
    """
    _check_tau(tau_omega)
    space.check(a)
    combos = enumerate_combinations(space)
    weights = np.zeros(space.size)
    same = [j for j, c in enumerate(combos) if c.class_id == a.class_id]
    scores = np.array([match_score(a, combos[j], tau_omega) for j in same])
    scores -= scores.max()
    e = np.exp(scores)
    weights[same] = e / e.sum()
    return weights


def weight_matrix(attrs: Sequence[AttributeSet], space: AttributeSpace, tau_omega: float) -> np.ndarray:
    """Stack of ``attraction_weights`` rows, one per attribute set (B x M)."""
    cache: dict[tuple[int, int, int], np.ndarray] = {}
    rows = []
    for a in attrs:
        key = a.as_tuple()
        if key not in cache:
            cache[key] = attraction_weights(a, space, tau_omega)
        rows.append(cache[key])
    if not rows:
        return np.zeros((0, space.size))
    return np.vstack(rows)


def hamming_matrix(combos: Iterable[AttributeSet]) -> np.ndarray:
    arr = np.array([c.as_tuple() for c in combos], dtype=int).reshape(-1, 3)
    return (arr[:, None, :] != arr[None, :, :]).sum(axis=2)
