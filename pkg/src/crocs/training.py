"""Joint Adam optimisation of the encoder and the prototype bank."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .attributes import INFINITE
from .data import TRAIN, VAL, Dataset, signal_matrix, subsample_labelled
from .encoder import EncoderParams, backward, forward, init_encoder
from .losses import AblationMode, total_loss
from .prototypes import PrototypeBank, init_prototypes

log = logging.getLogger(__name__)

PROTO_KEY = "prototypes"


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainConfig:
    tau_s: float = 0.1
    tau_omega: float = 1.0
    beta: float = 0.2
    E: int = 128
    batch_size: int = 256
    learning_rate: float = 1e-4
    epochs: int = 50
    ablation_mode: AblationMode = AblationMode.SOFT_REG
    label_fraction: float = 1.0
    seed: int = 0
    dropout: float = 0.1

    def __post_init__(self):
        self.ablation_mode = AblationMode(self.ablation_mode)
        if isinstance(self.tau_omega, str):
            self.tau_omega = parse_tau(self.tau_omega)
        if not self.tau_s > 0:
            raise ValueError("tau_s must be positive")
        if self.tau_omega != INFINITE and not self.tau_omega > 0:
            raise ValueError("tau_omega must be positive or inf")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.E < 2:
            raise ValueError("E must be at least 2")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch-norm needs batch statistics)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not 0 < self.label_fraction <= 1:
            raise ValueError("label_fraction must lie in (0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ablation_mode"] = self.ablation_mode.value
        d["tau_omega"] = format_tau(self.tau_omega)
        return d


def parse_tau(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinite", "infinity"):
        return INFINITE
    return float(value)


def format_tau(value: float):
    return "inf" if value == INFINITE else value


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState,
              lr: float) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """Bias-corrected Adam, applied in place to every array in ``params``."""
    for name, g in grads.items():
        if name not in params or params[name].shape != g.shape:
            raise ValueError(f"gradient {name!r} does not match a parameter of the same shape")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class TraceRow:
    epoch: int
    split: str
    nce: float
    reg: float
    total: float


@dataclass
class TrainResult:
    params: EncoderParams
    bank: PrototypeBank
    trace: list[TraceRow]


def _attrs(segments):
    return [s.attrs for s in segments]


def evaluate_loss(params: EncoderParams, bank: PrototypeBank, segments, config: TrainConfig,
                  batch_size: int = 512) -> tuple[float, float, float]:
    """Mean (nce, reg, total) over ``segments`` in EVAL mode; restores the mode."""
    mode = params.mode
    params.eval()
    try:
        nce_sum = 0.0
        reg = 0.0
        for start in range(0, len(segments), batch_size):
            chunk = segments[start:start + batch_size]
            emb, _ = forward(params, signal_matrix(chunk))
            out = total_loss(emb, bank, _attrs(chunk), config)
            nce_sum += out.nce * len(chunk)
            reg = out.reg
        nce = nce_sum / len(segments)
        return nce, reg, nce + reg
    finally:
        params.mode = mode


def train(dataset: Dataset, config: TrainConfig,
          on_epoch: Optional[Callable[[int, EncoderParams, PrototypeBank], None]] = None) -> TrainResult:
    """Jointly fit encoder and prototypes on the labelled training split.

    The trace holds one ``train`` and (when a labelled validation split
    exists) one ``val`` row per epoch.
    """
    if dataset.splits is None:
        raise ValueError("dataset must be split before training")
    if dataset.D is None:
        raise ValueError("cannot train on an empty dataset")
    if config.label_fraction < 1:
        dataset = subsample_labelled(dataset, config.label_fraction, config.seed)
    train_segs = dataset.select(TRAIN, labelled=True)
    val_segs = dataset.select(VAL, labelled=True)
    if len(train_segs) < 2:
        raise ValueError("need at least 2 labelled training segments")
    if any(s.attrs is None for s in train_segs + val_segs):
        raise ValueError("labelled segments need binned attributes (run bin_ages first)")

    params = init_encoder(dataset.D, config.E, config.seed, config.dropout)
    bank = init_prototypes(dataset.space, config.E, config.seed + 1, config.beta)
    state = OptimizerState()
    rng = np.random.default_rng([config.seed, 7])
    X = signal_matrix(train_segs)
    attrs = _attrs(train_segs)
    trace: list[TraceRow] = []
    n = len(train_segs)
    step = 0
    for epoch in range(1, config.epochs + 1):
        params.train()
        order = rng.permutation(n)
        sums = np.zeros(3)
        seen = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            step += 1
            emb, cache = forward(params, X[idx], rng_seed=int(rng.integers(2**63)))
            out = total_loss(emb, bank, [attrs[i] for i in idx], config)
            if not math.isfinite(out.total):
                raise TrainingAborted(f"non-finite loss at epoch {epoch}, step {step}: "
                                      f"nce={out.nce}, reg={out.reg}")
            grads, _ = backward(params, cache, out.grad_embeddings)
            grads[PROTO_KEY] = out.grad_prototypes
            tensors = params.trainable()
            tensors[PROTO_KEY] = bank.matrix
            adam_step(tensors, grads, state, config.learning_rate)
            params.version += 1
            if not np.all(np.isfinite(bank.matrix)):
                raise TrainingAborted(f"prototype bank became non-finite at epoch {epoch}, step {step}")
            sums += len(idx) * np.array([out.nce, out.reg, out.total])
            seen += len(idx)
        mean = sums / max(seen, 1)
        trace.append(TraceRow(epoch, TRAIN, *mean))
        if val_segs:
            trace.append(TraceRow(epoch, VAL, *evaluate_loss(params, bank, val_segs, config)))
        log.info("epoch %d: %s", epoch, ", ".join(f"{r.split}={r.total:.4f}" for r in trace[-2:]))
        if on_epoch is not None:
            on_epoch(epoch, params, bank)
    params.eval()
    return TrainResult(params, bank, trace)
