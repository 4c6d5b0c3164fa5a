"""Three-block 1-D convolutional encoder with hand-written backpropagation.

Each block is conv(kernel 7, stride 3, no padding) -> batch-norm -> ReLU ->
max-pool(2) -> dropout, followed by flatten -> dense -> ReLU.  Activations are
laid out channel-first, ``(batch, channels, length)``, and the flatten is
channel-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KERNEL = 7
STRIDE = 3
POOL = 2
CHANNELS = (1, 4, 16, 32)
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

TRAIN = "train"
EVAL = "eval"


def conv_length(n: int) -> int:
    return (n - KERNEL) // STRIDE + 1


def block_lengths(D: int) -> list[tuple[int, int]]:
    """(post-conv, post-pool) lengths for each block; raises if any collapses."""
    out = []
    n = D
    for b in range(len(CHANNELS) - 1):
        if n < KERNEL:
            raise ValueError(f"input length {D} too short: block {b + 1} receives length {n} < kernel {KERNEL}")
        c = conv_length(n)
        p = c // POOL
        if p < 1:
            raise ValueError(f"input length {D} too short: block {b + 1} pools length {c} down to 0")
        out.append((c, p))
        n = p
    return out


def flatten_dim(D: int) -> int:
    return block_lengths(D)[-1][1] * CHANNELS[-1]


def param_names() -> list[str]:
    names = []
    for b in range(len(CHANNELS) - 1):
        names += [f"conv{b}.weight", f"conv{b}.bias", f"bn{b}.gamma", f"bn{b}.beta",
                  f"bn{b}.running_mean", f"bn{b}.running_var"]
    return names + ["head.weight", "head.bias"]


def is_trainable(name: str) -> bool:
    return "running" not in name


@dataclass
class EncoderParams:
    D: int
    E: int
    tensors: dict[str, np.ndarray]
    mode: str = TRAIN
    dropout: float = 0.1
    # bumped on every in-place parameter update; caches remember it
    version: int = field(default=0, compare=False)

    @property
    def flatten_dim(self) -> int:
        return self.tensors["head.weight"].shape[0]

    def train(self) -> "EncoderParams":
        self.mode = TRAIN
        return self

    def eval(self) -> "EncoderParams":
        self.mode = EVAL
        return self

    def trainable(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if is_trainable(k)}

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.D, self.E, {k: v.copy() for k, v in self.tensors.items()},
                             self.mode, self.dropout, self.version)


def init_encoder(D: int, E: int, seed: int, dropout: float = 0.1) -> EncoderParams:
    if E < 1:
        raise ValueError(f"embedding dimension must be positive, got {E}")
    if not 0.0 <= dropout < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {dropout}")
    flat = flatten_dim(D)
    rng = np.random.default_rng(seed)
    t: dict[str, np.ndarray] = {}
    for b in range(len(CHANNELS) - 1):
        cin, cout = CHANNELS[b], CHANNELS[b + 1]
        bound = 1.0 / math.sqrt(KERNEL * cin)
        t[f"conv{b}.weight"] = rng.uniform(-bound, bound, size=(KERNEL, cin, cout))
        t[f"conv{b}.bias"] = rng.uniform(-bound, bound, size=cout)
        t[f"bn{b}.gamma"] = np.ones(cout)
        t[f"bn{b}.beta"] = np.zeros(cout)
        t[f"bn{b}.running_mean"] = np.zeros(cout)
        t[f"bn{b}.running_var"] = np.ones(cout)
    bound = 1.0 / math.sqrt(flat)
    t["head.weight"] = rng.uniform(-bound, bound, size=(flat, E))
    t["head.bias"] = rng.uniform(-bound, bound, size=E)
    return EncoderParams(D, E, t, TRAIN, dropout)


# --- layer primitives -------------------------------------------------------

def _windows(x: np.ndarray, out_len: int) -> np.ndarray:
    """Strided windows of x (B, C, n) as (B, out_len, C*K), channel-major."""
    B, C, _ = x.shape
    view = np.lib.stride_tricks.sliding_window_view(x, KERNEL, axis=2)[:, :, ::STRIDE][:, :, :out_len]
    return view.transpose(0, 2, 1, 3).reshape(B, out_len, C * KERNEL)


def conv_forward(x, weight, bias):
    B, C, n = x.shape
    L = conv_length(n)
    cols = _windows(x, L)
    w2 = weight.transpose(1, 0, 2).reshape(C * KERNEL, -1)
    y = cols @ w2 + bias
    return y.transpose(0, 2, 1), cols


def conv_backward(g, cols, weight, in_len):
    # g: (B, Cout, L)
    B, cout, L = g.shape
    cin = weight.shape[1]
    gt = g.transpose(0, 2, 1)
    w2 = weight.transpose(1, 0, 2).reshape(cin * KERNEL, cout)
    dw2 = cols.reshape(-1, cin * KERNEL).T @ gt.reshape(-1, cout)
    dweight = dw2.reshape(cin, KERNEL, cout).transpose(1, 0, 2)
    dbias = gt.sum(axis=(0, 1))
    dcols = (gt @ w2.T).reshape(B, L, cin, KERNEL)
    dx = np.zeros((B, cin, in_len))
    span = STRIDE * (L - 1) + 1
    for k in range(KERNEL):
        dx[:, :, k:k + span:STRIDE] += dcols[:, :, :, k].transpose(0, 2, 1)
    return dx, dweight, dbias


def bn_forward_train(x, gamma, beta):
    mean = x.mean(axis=(0, 2))
    var = x.var(axis=(0, 2))
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[None, :, None]) * inv[None, :, None]
    return gamma[None, :, None] * xhat + beta[None, :, None], (xhat, inv, mean, var)


def bn_backward(g, xhat, inv, gamma):
    n = g.shape[0] * g.shape[2]
    dgamma = (g * xhat).sum(axis=(0, 2))
    dbeta = g.sum(axis=(0, 2))
    dxhat = g * gamma[None, :, None]
    dx = (inv[None, :, None] / n) * (
        n * dxhat
        - dxhat.sum(axis=(0, 2))[None, :, None]
        - xhat * (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
    )
    return dx, dgamma, dbeta


def pool_forward(x):
    B, C, n = x.shape
    m = n // POOL
    pairs = x[:, :, :m * POOL].reshape(B, C, m, POOL)
    # argmax returns the first maximum, so ties route to the left element
    idx = pairs.argmax(axis=3)
    return np.take_along_axis(pairs, idx[..., None], axis=3)[..., 0], idx


def pool_backward(g, idx, in_len):
    B, C, m = g.shape
    dpairs = np.zeros((B, C, m, POOL))
    np.put_along_axis(dpairs, idx[..., None], g[..., None], axis=3)
    dx = np.zeros((B, C, in_len))
    dx[:, :, :m * POOL] = dpairs.reshape(B, C, m * POOL)
    return dx


# --- whole network ----------------------------------------------------------

@dataclass
class ForwardCache:
    version: int
    mode: str
    x: np.ndarray
    blocks: list = field(default_factory=list)
    flat: np.ndarray = None
    head_pre: np.ndarray = None


def forward(params: EncoderParams, batch: np.ndarray, rng_seed: int = 0):
    """Embed a (B, D) batch.  Returns ``(embeddings, cache)``.

    In TRAIN mode batch-norm uses batch statistics (and updates the running
    ones) and dropout is active; in EVAL mode the map is deterministic and
    ``params`` is not touched.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.D:
        raise ValueError(f"expected a (B, {params.D}) batch, got shape {batch.shape}")
    train = params.mode == TRAIN
    if train and batch.shape[0] < 2:
        raise ValueError("TRAIN mode needs at least 2 instances for batch statistics")
    t = params.tensors
    rng = np.random.default_rng(rng_seed)
    cache = ForwardCache(params.version, params.mode, batch)
    h = batch[:, None, :]
    for b in range(len(CHANNELS) - 1):
        in_len = h.shape[2]
        z, cols = conv_forward(h, t[f"conv{b}.weight"], t[f"conv{b}.bias"])
        gamma, beta = t[f"bn{b}.gamma"], t[f"bn{b}.beta"]
        if train:
            y, bn = bn_forward_train(z, gamma, beta)
            _, _, mean, var = bn
            n = z.shape[0] * z.shape[2]
            unbiased = var * n / max(n - 1, 1)
            t[f"bn{b}.running_mean"] *= 1 - BN_MOMENTUM
            t[f"bn{b}.running_mean"] += BN_MOMENTUM * mean
            t[f"bn{b}.running_var"] *= 1 - BN_MOMENTUM
            t[f"bn{b}.running_var"] += BN_MOMENTUM * unbiased
        else:
            inv = 1.0 / np.sqrt(t[f"bn{b}.running_var"] + BN_EPS)
            y = (z - t[f"bn{b}.running_mean"][None, :, None]) * (gamma * inv)[None, :, None] + beta[None, :, None]
            bn = None
        r = np.maximum(y, 0.0)
        p, pidx = pool_forward(r)
        if train and params.dropout > 0:
            keep = 1.0 - params.dropout
            mask = (rng.random(p.shape) < keep) / keep
            h = p * mask
        else:
            mask = None
            h = p
        cache.blocks.append((in_len, cols, bn, y, pidx, mask, r.shape[2]))
    flat = h.reshape(h.shape[0], -1)
    pre = flat @ t["head.weight"] + t["head.bias"]
    cache.flat = flat
    cache.head_pre = pre
    return np.maximum(pre, 0.0), cache


def backward(params: EncoderParams, cache: ForwardCache, grad_output: np.ndarray):
    """Reverse-mode gradients of ``forward``.  Returns ``(grads, grad_input)``.

    ``grads`` holds one entry per trainable tensor.
    """
    if cache.version != params.version:
        raise ValueError("stale cache: parameters changed since the forward pass")
    if cache.mode != TRAIN:
        raise ValueError("backward requires a cache from a TRAIN-mode forward pass")
    t = params.tensors
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != cache.head_pre.shape:
        raise ValueError(f"grad_output shape {g.shape} does not match output {cache.head_pre.shape}")
    grads: dict[str, np.ndarray] = {}
    g = g * (cache.head_pre > 0)
    grads["head.weight"] = cache.flat.T @ g
    grads["head.bias"] = g.sum(axis=0)
    gflat = g @ t["head.weight"].T
    B = g.shape[0]
    h = gflat.reshape(B, CHANNELS[-1], -1)
    for b in reversed(range(len(CHANNELS) - 1)):
        in_len, cols, bn, y, pidx, mask, relu_len = cache.blocks[b]
        if mask is not None:
            h = h * mask
        h = pool_backward(h, pidx, relu_len)
        h = h * (y > 0)
        xhat, inv, _, _ = bn
        h, grads[f"bn{b}.gamma"], grads[f"bn{b}.beta"] = bn_backward(h, xhat, inv, t[f"bn{b}.gamma"])
        h, grads[f"conv{b}.weight"], grads[f"conv{b}.bias"] = conv_backward(h, cols, t[f"conv{b}.weight"], in_len)
    ordered = {k: grads[k] for k in param_names() if is_trainable(k)}
    return ordered, h[:, 0, :]
