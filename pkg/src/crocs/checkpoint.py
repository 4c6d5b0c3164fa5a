"""Binary checkpoint container for an encoder plus prototype bank.

Layout (all integers little-endian uint32, all reals little-endian float64)::

    b"CROCS1"  D  E  dropout  n_tensors
    per tensor: name_len name ndim dims... values (row-major)
    b"PROTO"   M  E  class_count sex_count age_bin_count  beta
    M x (class_id, sex_id, age_bin)
    M*E prototype values (row-major)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .attributes import AttributeSpace, AttributeSet
from .encoder import EVAL, EncoderParams, param_names
from .prototypes import PrototypeBank

MAGIC = b"CROCS1"
PROTO_TAG = b"PROTO"


def _u32(*xs) -> bytes:
    return struct.pack(f"<{len(xs)}I", *xs)


def _f64(x: float) -> bytes:
    return struct.pack("<d", x)


def dumps(params: EncoderParams, bank: PrototypeBank) -> bytes:
    if bank.E != params.E:
        raise ValueError("encoder and bank embedding dimensions differ")
    out = [MAGIC, _u32(params.D, params.E), _f64(params.dropout), _u32(len(params.tensors))]
    for name in param_names():
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        raw = name.encode("ascii")
        out += [_u32(len(raw)), raw, _u32(arr.ndim, *arr.shape), arr.tobytes()]
    sp = bank.space
    out += [PROTO_TAG, _u32(bank.M, bank.E, sp.class_count, sp.sex_count, sp.age_bin_count), _f64(bank.beta)]
    out.append(np.array([c.as_tuple() for c in bank.combos], dtype="<u4").tobytes())
    out.append(np.ascontiguousarray(bank.matrix, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ValueError("truncated checkpoint")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, n: int = 1):
        vals = struct.unpack(f"<{n}I", self.take(4 * n))
        return vals if n > 1 else vals[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def array(self, shape) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)


def loads(buf: bytes) -> tuple[EncoderParams, PrototypeBank]:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise ValueError("not a CROCS1 checkpoint")
    D, E = r.u32(2)
    dropout = r.f64()
    n = r.u32()
    tensors = {}
    for _ in range(n):
        name = r.take(r.u32()).decode("ascii")
        ndim = r.u32()
        shape = tuple(r.u32(ndim)) if ndim > 1 else ((r.u32(),) if ndim == 1 else ())
        tensors[name] = r.array(shape)
    if list(tensors) != param_names():
        raise ValueError("checkpoint tensor list does not match the encoder layout")
    if r.take(len(PROTO_TAG)) != PROTO_TAG:
        raise ValueError("checkpoint is missing the PROTO section")
    M, E2, cc, sc, ac = r.u32(5)
    beta = r.f64()
    if E2 != E:
        raise ValueError("prototype dimension differs from encoder output dimension")
    space = AttributeSpace(cc, sc, ac)
    triples = np.frombuffer(r.take(12 * M), dtype="<u4").reshape(M, 3)
    combos = [AttributeSet(int(a), int(b), int(c), space=space) for a, b, c in triples]
    matrix = r.array((M, E))
    if r.pos != len(buf):
        raise ValueError("trailing bytes after checkpoint")
    params = EncoderParams(D, E, tensors, EVAL, dropout)
    return params, PrototypeBank(matrix, combos, beta, space)


def save(path, params: EncoderParams, bank: PrototypeBank) -> None:
    Path(path).write_bytes(dumps(params, bank))


def load(path) -> tuple[EncoderParams, PrototypeBank]:
    return loads(Path(path).read_bytes())
