"""Sparse messages and the compressor family.

A message is a :class:`SparseUpdate`: sorted coordinate indices plus either
exact values (``index_value``), a shared magnitude with signs (``ternary``),
or the full vector (``dense``, used only by the uncompressed baseline).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels

ENCODINGS = ("index_value", "ternary", "dense")
COMPRESSOR_KINDS = ("identity", "hard_threshold", "topk", "gamma_fedht")


@dataclass
class SparseUpdate:
    dim: int
    indices: np.ndarray
    values: np.ndarray
    encoding: str = "index_value"
    ternary_magnitude: float = 0.0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be 1-d and of equal length")

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def validate(self) -> None:
        idx = self.indices
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError("index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
        if self.encoding == "ternary":
            mu = self.ternary_magnitude
            if mu < 0 or not np.all(np.abs(self.values) == mu):
                raise ValueError("ternary values must be +/- ternary_magnitude")
        if self.encoding == "dense" and self.nnz != self.dim:
            raise ValueError("dense messages carry every coordinate")

    def to_bytes(self) -> bytes:
        """Canonical little-endian layout; its length is ``encoded_size_bytes``."""
        if self.encoding == "dense":
            return self.values.astype("<f4").tobytes()
        head = struct.pack("<II", self.dim, self.nnz)
        idx = self.indices.astype("<u4").tobytes()
        if self.encoding == "index_value":
            return head + idx + self.values.astype("<f4").tobytes()
        signs = np.packbits(self.values < 0, bitorder="little").tobytes()
        return head + struct.pack("<f", self.ternary_magnitude) + idx + signs


@dataclass(frozen=True)
class CompressorKind:
    """Compressor configuration.

    ``param`` is the threshold for ``hard_threshold`` and the kept fraction
    for ``topk``; ``gamma_fedht`` receives its threshold per round from the
    engine.  ``quantize_after`` applies the ternary quantizer to survivors.
    """

    kind: str = "identity"
    param: float = 0.0
    quantize_after: bool = False
    lambda0: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in COMPRESSOR_KINDS:
            raise ValueError(f"unknown compressor kind {self.kind!r}")
        if self.kind == "hard_threshold" and self.param < 0:
            raise ValueError("hard_threshold needs lambda >= 0")
        if self.kind == "topk" and not (0.0 < self.param <= 1.0):
            raise ValueError("topk needs k in (0, 1]")
        if self.kind == "gamma_fedht" and (self.lambda0 < 0 or self.alpha < 1):
            raise ValueError("gamma_fedht needs lambda0 >= 0 and alpha >= 1")

    @property
    def uses_threshold(self) -> bool:
        return self.kind in ("hard_threshold", "gamma_fedht")


def compress_hard_threshold(x, lam: float) -> SparseUpdate:
    x = np.ascontiguousarray(x, dtype=np.float64)
    idx = kernels.threshold_select(x, float(lam))
    return SparseUpdate(x.shape[0], idx, x[idx])


def topk_count(d: int, k: float) -> int:
    return max(1, int(math.floor(k * d)))


def compress_topk(x, k: float) -> SparseUpdate:
    if not (0.0 < k <= 1.0):
        raise ValueError("k must lie in (0, 1]")
    x = np.ascontiguousarray(x, dtype=np.float64)
    m = min(topk_count(x.shape[0], k), x.shape[0])
    idx = kernels.topk_select(x, m)
    return SparseUpdate(x.shape[0], idx, x[idx])


def compress_identity(x) -> SparseUpdate:
    x = np.array(x, dtype=np.float64)
    return SparseUpdate(x.shape[0], np.arange(x.shape[0]), x, encoding="dense")


def quantize_ternary(u: SparseUpdate) -> SparseUpdate:
    if u.encoding != "index_value":
        raise ValueError("ternary quantizer expects an index_value message")
    if u.nnz == 0:
        return SparseUpdate(u.dim, u.indices.copy(), u.values.copy(), "ternary", 0.0)
    mu = float(np.mean(np.abs(u.values)))
    return SparseUpdate(u.dim, u.indices.copy(), np.where(u.values < 0, -mu, mu), "ternary", mu)


def compress(x, comp: CompressorKind, lam: float | None = None) -> SparseUpdate:
    """Apply ``comp`` to ``x``; ``lam`` is the round threshold for ``gamma_fedht``."""
    if comp.kind == "identity":
        return compress_identity(x)
    if comp.kind == "hard_threshold":
        msg = compress_hard_threshold(x, comp.param)
    elif comp.kind == "gamma_fedht":
        if lam is None:
            raise ValueError("gamma_fedht needs the round threshold")
        msg = compress_hard_threshold(x, lam)
    else:
        msg = compress_topk(x, comp.param)
    return quantize_ternary(msg) if comp.quantize_after else msg


def decompress(u: SparseUpdate) -> np.ndarray:
    return kernels.scatter(u.dim, u.indices, u.values)


def encoded_size_bytes(u: SparseUpdate) -> int:
    if u.encoding == "dense":
        return 4 * u.dim
    if u.encoding == "index_value":
        return 8 + 8 * u.nnz
    return 8 + 4 + 4 * u.nnz + (u.nnz + 7) // 8


def dense_size_bytes(dim: int) -> int:
    return 4 * dim


def compression_ratio(u: SparseUpdate) -> float:
    return u.nnz / u.dim if u.dim else 0.0
