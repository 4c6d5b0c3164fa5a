"""Segments, datasets, synthetic signal generation and preprocessing.

Datasets are treated as immutable: every preprocessing step returns a new
``Dataset``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .attributes import AttributeSet, AttributeSpace

TRAIN, VAL, TEST = "train", "val", "test"
SPLITS = (TRAIN, VAL, TEST)

FIXED_COLUMNS = ["instance_id", "patient_id", "lead", "class", "sex", "age_years", "labelled"]

AGE_RANGE = (20.0, 90.0)
WANDER = 1.0


class NormMode(str, enum.Enum):
    MINMAX = "minmax"
    STANDARDIZE = "standardize"
    NONE = "none"


@dataclass
class Segment:
    instance_id: int
    patient_id: int
    values: np.ndarray
    attrs_raw: Optional[tuple[int, int, float]]
    labelled: bool = True
    attrs: Optional[AttributeSet] = None
    lead: str = "0"


@dataclass
class Dataset:
    segments: list[Segment]
    space: AttributeSpace
    splits: Optional[list[str]] = None
    age_boundaries: Optional[tuple[float, ...]] = None

    def __len__(self):
        return len(self.segments)

    @property
    def D(self) -> Optional[int]:
        return len(self.segments[0].values) if self.segments else None

    def patients(self) -> list[int]:
        return sorted({s.patient_id for s in self.segments})

    def select(self, split: Optional[str] = None, labelled: Optional[bool] = None) -> list[Segment]:
        if split is not None and self.splits is None:
            raise ValueError("dataset has not been split")
        out = []
        for i, s in enumerate(self.segments):
            if split is not None and self.splits[i] != split:
                continue
            if labelled is not None and s.labelled != labelled:
                continue
            out.append(s)
        return out

    def patient_splits(self) -> dict[int, str]:
        if self.splits is None:
            return {}
        return {s.patient_id: tag for s, tag in zip(self.segments, self.splits)}


def signal_matrix(segments: Sequence[Segment]) -> np.ndarray:
    if not segments:
        return np.zeros((0, 0))
    return np.vstack([s.values for s in segments])


# --- synthetic generation ---------------------------------------------------

# Gaussian bumps (offset, width, amplitude) per beat, one template per class.
_BASE_TEMPLATES = [
    [(0.0, 1.5, 1.0), (12.0, 4.0, 0.3)],
    [(0.0, 5.0, -0.8), (11.0, 3.0, 0.45)],
    [(-3.0, 1.5, 1.0), (3.0, 1.5, -1.0)],
    [(0.0, 7.0, 0.7), (-10.0, 2.0, 0.45), (10.0, 2.0, 0.45)],
]


def class_template(class_id: int) -> list[tuple[float, float, float]]:
    if class_id < len(_BASE_TEMPLATES):
        return _BASE_TEMPLATES[class_id]
    rng = np.random.default_rng(10_000 + class_id)
    n = int(rng.integers(2, 4))
    return [(float(rng.uniform(-12, 12)), float(rng.uniform(1.5, 6)), float(rng.choice([-1, 1]) * rng.uniform(0.4, 1.0)))
            for _ in range(n)]


def beat_period(age_years: float) -> float:
    """Samples per beat; grows linearly with age (older -> slower rate)."""
    return 30.0 + 0.5 * (age_years - AGE_RANGE[0])


def sex_asymmetry(sex_id: int, sex_count: int) -> tuple[float, float]:
    """(positive-lobe gain, negative-lobe gain); linear in the sex index."""
    centred = 0.0 if sex_count == 1 else 2.0 * sex_id / (sex_count - 1) - 1.0
    return 1.0 + 0.3 * centred, 1.0 - 0.3 * centred


def synth_waveform(class_id: int, sex_id: int, age_years: float, D: int, sex_count: int,
                   rng: np.random.Generator, noise_sd: float, wander: float = WANDER) -> np.ndarray:
    period = beat_period(age_years)
    phase = rng.uniform(0.0, period)
    t = np.arange(D, dtype=float)
    y = np.zeros(D)
    centre = phase - period
    template = class_template(class_id)
    while centre < D + period:
        for off, width, amp in template:
            y += amp * np.exp(-0.5 * ((t - centre - off) / width) ** 2)
        centre += period + rng.normal(0.0, 0.5)
    pos, neg = sex_asymmetry(sex_id, sex_count)
    y = np.where(y > 0, pos * y, neg * y)
    # slow baseline drift with random amplitude, period and phase; it swamps
    # raw-sample distances without touching beat morphology
    drift_period = rng.uniform(0.5, 1.5) * D
    y = y + wander * rng.uniform(0.0, 1.0) * np.sin(2 * np.pi * t / drift_period + rng.uniform(0, 2 * np.pi))
    if noise_sd > 0:
        y = y + rng.normal(0.0, noise_sd, D)
    return y


def generate_synthetic(space: AttributeSpace, patients: int, segments_per_patient: int, D: int,
                       noise_sd: float, seed: int) -> Dataset:
    """Quasi-periodic signals whose shape, rate and asymmetry encode class, age and sex."""
    if patients < 1 or segments_per_patient < 1:
        raise ValueError("patients and segments_per_patient must be positive")
    if D < 64:
        raise ValueError(f"segment length must be at least 64, got {D}")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    rng = np.random.default_rng(seed)
    segments = []
    for pid in range(patients):
        c = int(rng.integers(space.class_count))
        s = int(rng.integers(space.sex_count))
        age = float(rng.uniform(*AGE_RANGE))
        for k in range(segments_per_patient):
            seg_rng = np.random.default_rng([seed, pid, k])
            values = synth_waveform(c, s, age, D, space.sex_count, seg_rng, noise_sd)
            segments.append(Segment(len(segments), pid, values, (c, s, age), True))
    return Dataset(segments, space)


# --- CSV ingestion ----------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(dataset: Dataset, path) -> None:
    D = dataset.D or 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIXED_COLUMNS + [f"v_{i}" for i in range(D)])
        for s in dataset.segments:
            if s.labelled and s.attrs_raw is not None:
                c, sx, age = s.attrs_raw
                attrs = [str(int(c)), str(int(sx)), _fmt(age), "1"]
            else:
                attrs = ["", "", "", "0"]
            w.writerow([str(s.instance_id), str(s.patient_id), s.lead] + attrs + [_fmt(v) for v in s.values])


def ingest_csv(path, space: Optional[AttributeSpace] = None, D: Optional[int] = None) -> Dataset:
    """Parse the segment CSV format.  Errors carry the 1-based line number.

    Without ``space`` the attribute space is inferred from the largest class
    and sex ids seen (4 age bins).
    """
    path = Path(path)
    segments: list[Segment] = []
    leads = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: missing header") from None
        if header[:len(FIXED_COLUMNS)] != FIXED_COLUMNS:
            raise ValueError(f"{path}:1: header must start with {','.join(FIXED_COLUMNS)}")
        vcols = header[len(FIXED_COLUMNS):]
        if vcols != [f"v_{i}" for i in range(len(vcols))]:
            raise ValueError(f"{path}:1: value columns must be v_0..v_{{D-1}}")
        width = len(vcols)
        if D is not None and width != D:
            raise ValueError(f"{path}:1: expected D={D} value columns, found {width}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
            try:
                iid, pid = int(row[0]), int(row[1])
                labelled = row[6].strip()
                if labelled not in ("0", "1"):
                    raise ValueError(f"labelled must be 0 or 1, got {labelled!r}")
                values = np.array([float(v) for v in row[len(FIXED_COLUMNS):]])
                if not np.all(np.isfinite(values)):
                    raise ValueError("non-finite sample value")
                raw = None
                if labelled == "1":
                    raw = (int(row[3]), int(row[4]), float(row[5]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            leads.add(row[2])
            segments.append(Segment(iid, pid, values, raw, labelled == "1", lead=row[2]))
    if len(leads) > 1:
        raise ValueError(f"{path}: multi-lead data is not supported (leads {sorted(leads)})")
    if space is None:
        raws = [s.attrs_raw for s in segments if s.attrs_raw is not None]
        classes = max((r[0] for r in raws), default=0) + 1
        sexes = max((r[1] for r in raws), default=1) + 1
        space = AttributeSpace(classes, max(sexes, 2), 4)
    for s in segments:
        if s.attrs_raw is not None:
            c, sx, _ = s.attrs_raw
            if not (0 <= c < space.class_count and 0 <= sx < space.sex_count):
                raise ValueError(f"{path}: instance {s.instance_id} has attributes outside {space}")
    return Dataset(segments, space)


# --- preprocessing ----------------------------------------------------------

def split_patients(dataset: Dataset, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0) -> Dataset:
    if len(ratios) != 3 or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9) or min(ratios) < 0:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    pids = dataset.patients()
    if len(pids) < 5:
        raise ValueError(f"need at least 5 patients to split, got {len(pids)}")
    order = np.random.default_rng(seed).permutation(len(pids))
    n = len(pids)
    cut1 = int(round(ratios[0] * n))
    cut2 = int(round((ratios[0] + ratios[1]) * n))
    tag = {}
    for rank, i in enumerate(order):
        tag[pids[i]] = TRAIN if rank < cut1 else VAL if rank < cut2 else TEST
    return replace(dataset, splits=[tag[s.patient_id] for s in dataset.segments])


def apply_patient_splits(dataset: Dataset, mapping: dict[int, str]) -> Dataset:
    missing = {s.patient_id for s in dataset.segments} - set(mapping)
    if missing:
        raise ValueError(f"no split recorded for patients {sorted(missing)[:5]}")
    return replace(dataset, splits=[mapping[s.patient_id] for s in dataset.segments])


def age_boundaries_from(ages: Sequence[float], bins: int) -> tuple[float, ...]:
    qs = [100.0 * k / bins for k in range(1, bins)]
    return tuple(float(b) for b in np.percentile(np.asarray(ages, dtype=float), qs, method="linear"))


def age_to_bin(age: float, boundaries: Sequence[float]) -> int:
    # side="left": an age equal to a cut point falls in the lower bin
    return int(np.searchsorted(np.asarray(boundaries), age, side="left"))


def bin_ages(dataset: Dataset, boundaries: Optional[Sequence[float]] = None) -> Dataset:
    """Attach AttributeSets using training-split age quantiles.

    One age per labelled training patient enters the quantiles.  Pass
    ``boundaries`` to reuse cut points computed elsewhere.
    """
    space = dataset.space
    if boundaries is None:
        ages = {}
        for s in dataset.select(TRAIN, labelled=True):
            ages[s.patient_id] = s.attrs_raw[2]
        if not ages:
            raise ValueError("no labelled training ages to compute age boundaries from")
        boundaries = age_boundaries_from(list(ages.values()), space.age_bin_count)
    boundaries = tuple(float(b) for b in boundaries)
    if len(boundaries) != space.age_bin_count - 1:
        raise ValueError(f"need {space.age_bin_count - 1} age boundaries, got {len(boundaries)}")
    segs = []
    for s in dataset.segments:
        attrs = None
        if s.labelled and s.attrs_raw is not None:
            c, sx, age = s.attrs_raw
            attrs = space.make(c, sx, age_to_bin(age, boundaries))
        segs.append(replace(s, attrs=attrs))
    return replace(dataset, segments=segs, age_boundaries=boundaries)


def normalize_values(values: np.ndarray, mode: NormMode, instance_id=None) -> np.ndarray:
    mode = NormMode(mode)
    if mode is NormMode.NONE:
        return values
    if mode is NormMode.MINMAX:
        lo, hi = values.min(), values.max()
        if hi == lo:
            raise ValueError(f"instance {instance_id} is constant; cannot min-max normalise")
        return (values - lo) / (hi - lo)
    sd = values.std()
    if sd == 0:
        raise ValueError(f"instance {instance_id} is constant; cannot standardise")
    return (values - values.mean()) / sd


def normalize(dataset: Dataset, mode: NormMode = NormMode.MINMAX) -> Dataset:
    """Per-segment amplitude normalisation."""
    segs = [replace(s, values=normalize_values(s.values, mode, s.instance_id)) for s in dataset.segments]
    return replace(dataset, segments=segs)


def subsample_labelled(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep labels for a seeded fraction of labelled training patients.

    Whole patients are kept or dropped; dropped patients' segments become
    unlabelled (they stay in the dataset).
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"label fraction must lie in (0, 1], got {fraction}")
    if fraction == 1:
        return dataset
    pids = sorted({s.patient_id for s in dataset.select(TRAIN, labelled=True)})
    keep_n = max(1, int(round(fraction * len(pids))))
    rng = np.random.default_rng([seed, 0x1abe1])
    keep = set(np.asarray(pids)[rng.permutation(len(pids))[:keep_n]].tolist())
    segs = []
    for s, tag in zip(dataset.segments, dataset.splits):
        if tag == TRAIN and s.labelled and s.patient_id not in keep:
            s = replace(s, labelled=False, attrs=None)
        segs.append(s)
    return replace(dataset, segments=segs)
