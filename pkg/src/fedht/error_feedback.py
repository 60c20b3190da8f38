"""Per-client error buffers (vanilla error feedback)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compressors import CompressorKind, SparseUpdate, compress


@dataclass
class ErrorBuffer:
    e: np.ndarray

    @classmethod
    def zeros(cls, d: int) -> "ErrorBuffer":
        return cls(np.zeros(d, dtype=np.float64))

    @property
    def dim(self) -> int:
        return int(self.e.shape[0])


def compress_with_ef(
    buffer: ErrorBuffer,
    delta,
    comp: CompressorKind,
    lam: float | None = None,
) -> tuple[SparseUpdate, ErrorBuffer]:
    """Compress ``e + delta`` and keep what was not sent.

    The residual is formed against the message actually sent, so for the
    quantized variants it also carries the quantization error.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != buffer.e.shape:
        raise ValueError(f"dimension mismatch: buffer {buffer.e.shape}, delta {delta.shape}")
    acc = buffer.e + delta
    msg = compress(acc, comp, lam)
    residual = acc.copy()
    # outside the support the residual is acc itself; inside it is acc - sent
    residual[msg.indices] = acc[msg.indices] - msg.values
    return msg, ErrorBuffer(residual)


def freeze(buffer: ErrorBuffer) -> ErrorBuffer:
    return buffer
