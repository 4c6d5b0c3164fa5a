"""Contrastive prototype losses and the arrangement regulariser.

All functions return analytic gradients alongside the loss.  Logits are
temperature-scaled cosine similarities between embeddings and prototype rows;
the softmax always runs over all M prototypes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attributes import AttributeSet, weight_matrix
from .prototypes import PrototypeBank, normalize_rows, target_distances


class AblationMode(str, enum.Enum):
    HARD = "hard"
    SOFT = "soft"
    SOFT_REG = "soft_reg"


@dataclass
class LossBreakdown:
    nce: float
    reg: float
    total: float
    grad_embeddings: np.ndarray
    grad_prototypes: np.ndarray


def similarity(v, p, tau_s: float) -> float:
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    nv, np_ = np.linalg.norm(v), np.linalg.norm(p)
    if nv == 0 or np_ == 0:
        raise ValueError("cosine similarity is undefined for a zero-norm vector")
    return float(v @ p / (nv * np_) / tau_s)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _project(grad_unit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Chain rule through x -> x/|x| for each row."""
    radial = (grad_unit * unit).sum(axis=1, keepdims=True)
    return (grad_unit - radial * unit) / norms[:, None]


def _unit_embeddings(x: np.ndarray):
    """Unit rows plus a mask of all-zero rows.

    An all-zero embedding (every output unit inactive) has no direction; it
    is kept as the zero vector, so it scores 0 against every prototype and
    receives a zero gradient.
    """
    norms = np.linalg.norm(x, axis=1)
    dead = norms == 0
    safe = np.where(dead, 1.0, norms)
    return x / safe[:, None], safe, dead


def weighted_nce(embeddings: np.ndarray, prototypes: np.ndarray, weights: np.ndarray, tau_s: float):
    """-(1/B) sum_i sum_j w_ij log softmax_j(s_ij), rows of ``weights`` summing to 1.

    Returns ``(loss, grad_embeddings, grad_prototypes)``.
    """
    V, vn, dead = _unit_embeddings(np.asarray(embeddings, dtype=float))
    P, pn = normalize_rows(np.asarray(prototypes, dtype=float), "prototype row")
    B = V.shape[0]
    logits = V @ P.T / tau_s
    logp = _log_softmax(logits)
    # multiply only where weight is nonzero so -inf log-probs cannot leak NaN
    contrib = np.where(weights > 0, weights * logp, 0.0)
    loss = float(-contrib.sum() / B)
    G = (np.exp(logp) * weights.sum(axis=1, keepdims=True) - weights) / B
    gV = _project(G @ P / tau_s, V, vn)
    gV[dead] = 0.0
    gP = _project(G.T @ V / tau_s, P, pn)
    return loss, gV, gP


def nce_hard(embeddings, bank: PrototypeBank, matched_index: Sequence[int], tau_s: float):
    idx = np.asarray(matched_index)
    B = np.shape(embeddings)[0]
    if idx.shape != (B,) or (idx.size and (idx.min() < 0 or idx.max() >= bank.M)):
        raise ValueError(f"matched_index must hold {B} indices in [0, {bank.M})")
    if idx.size and not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("matched_index must be integral")
    W = np.zeros((B, bank.M))
    W[np.arange(B), idx] = 1.0
    return weighted_nce(embeddings, bank.matrix, W, tau_s)


def nce_soft(embeddings, bank: PrototypeBank, attrs: Sequence[AttributeSet], tau_s: float, tau_omega: float):
    if len(attrs) != np.shape(embeddings)[0]:
        raise ValueError("one attribute set per embedding row is required")
    W = weight_matrix(attrs, bank.space, tau_omega)
    return weighted_nce(embeddings, bank.matrix, W, tau_s)


def reg_loss(bank: PrototypeBank):
    """Sum over ordered same-class pairs of (normalised distance - beta * hamming)^2.

    Returns ``(loss, grad_prototypes)``.  Coincident rows (distance 0) get a
    zero subgradient from their pair.
    """
    P, pn = normalize_rows(bank.matrix, "prototype row")
    target = target_distances(bank)
    diff = P[:, None, :] - P[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(d, 0.0)
    resid = np.where(target.same_class_mask, d - target.values, 0.0)
    np.fill_diagonal(resid, 0.0)
    loss = float((resid ** 2).sum())
    # each unordered pair appears twice, hence 4 = 2 (square) * 2 (ordered pairs)
    coef = np.divide(4.0 * resid, d, out=np.zeros_like(d), where=d > 0)
    grad_unit = (coef[:, :, None] * diff).sum(axis=1)
    return loss, _project(grad_unit, P, pn)


def total_loss(embeddings, bank: PrototypeBank, attrs: Sequence[AttributeSet], config) -> LossBreakdown:
    """Objective selected by ``config.ablation_mode``; reads ``tau_s``/``tau_omega``."""
    mode = AblationMode(config.ablation_mode)
    if mode is AblationMode.HARD:
        matched = [bank.space.index_of(a) for a in attrs]
        nce, gV, gP = nce_hard(embeddings, bank, matched, config.tau_s)
    else:
        nce, gV, gP = nce_soft(embeddings, bank, attrs, config.tau_s, config.tau_omega)
    reg = 0.0
    if mode is AblationMode.SOFT_REG:
        reg, gR = reg_loss(bank)
        gP = gP + gR
    return LossBreakdown(nce, reg, nce + reg, gV, gP)
