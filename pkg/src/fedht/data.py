"""Dataset ingestion (IDX files, synthetic generators) and label-skew partitioning."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# IDX type code -> (big-endian dtype, element size)
_IDX_TYPES = {
    0x08: (">u1", 1),
    0x09: (">i1", 1),
    0x0B: (">i2", 2),
    0x0C: (">i4", 4),
    0x0D: (">f4", 4),
    0x0E: (">f8", 8),
}
IDX_LABELS_MAGIC = 0x00000801
IDX_IMAGES_MAGIC = 0x00000803


class IDXError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.reason = message
        self.offset = offset


class PartitionError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels have different row counts")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValueError("label outside [0, classes)")

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def features(self) -> int:
        return int(self.inputs.shape[1])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.classes)


@dataclass
class Partition:
    assignments: list
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.assignments)


def weights_from_sizes(sizes) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.float64)
    return sizes / sizes.sum()


# ---------------------------------------------------------------------- IDX


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX buffer.

    Unsigned-byte tensors with two or more dimensions (images) are returned
    as float64 scaled by 1/255; everything else keeps its integer or float
    values.
    """
    data = bytes(data)
    if len(data) < 4:
        raise IDXError("truncated header: missing magic number", len(data))
    zero, type_code, ndim = struct.unpack(">HBB", data[:4])
    if zero != 0 or type_code not in _IDX_TYPES:
        raise IDXError(f"bad magic number 0x{data[:4].hex()}", 0)
    if ndim == 0:
        raise IDXError("bad magic number: zero dimensions", 3)
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise IDXError(f"truncated header: {ndim} dimension sizes expected", len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header_end])
    dtype, size = _IDX_TYPES[type_code]
    expected = size
    for k in dims:
        expected *= k
        if expected > len(data):
            raise IDXError(
                f"dimension sizes {dims} exceed the {len(data)}-byte buffer", header_end
            )
    actual = len(data) - header_end
    if actual != expected:
        raise IDXError(
            f"payload length mismatch: declared {expected} bytes, found {actual}", header_end
        )
    arr = np.frombuffer(data, dtype=dtype, offset=header_end).reshape(dims)
    if type_code == 0x08 and ndim >= 2:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.int64) if np.issubdtype(arr.dtype, np.integer) else arr.astype(np.float64)


def read_idx(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    try:
        return parse_idx(raw)
    except IDXError as exc:
        raise IDXError(f"{path}: {exc.reason}", exc.offset) from None


def load_idx_dataset(images_path, labels_path, classes: int | None = None) -> Dataset:
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images_path} has {images.shape[0]} items, {labels_path} has {labels.shape[0]}")
    classes = int(labels.max()) + 1 if classes is None else classes
    return Dataset(images.reshape(images.shape[0], -1), labels, classes)


# ---------------------------------------------------------------- synthetic


def make_blobs(
    samples: int,
    features: int,
    classes: int,
    separation: float = 1.0,
    noise: float = 1.0,
    seed: int = 0,
    scale: str = "unit",
) -> Dataset:
    """Gaussian class clusters, affinely mapped into [0, 1].

    ``scale="standard"`` instead gives every feature zero mean and unit
    variance, which keeps the logistic objective well conditioned.
    """
    if classes < 2:
        raise ValueError("blobs need at least two classes")
    if scale not in ("unit", "standard"):
        raise ValueError(f"unknown blob scaling {scale!r}")
    rng = np.random.default_rng(seed)
    centers = separation * rng.standard_normal((classes, features))
    labels = np.arange(samples) % classes
    rng.shuffle(labels)
    x = centers[labels] + noise * rng.standard_normal((samples, features))
    if scale == "standard":
        sd = x.std(axis=0)
        return Dataset((x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0), labels, classes)
    lo, hi = x.min(), x.max()
    x = (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    return Dataset(x, labels, classes)


def split_holdout(ds: Dataset, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ds))
    cut = int(round(len(ds) * (1.0 - fraction)))
    return ds.subset(np.sort(perm[:cut])), ds.subset(np.sort(perm[cut:]))


def make_quadratic(d: int, mu: float, L: float, seed: int = 0, f_star: float = 0.0):
    """Random SPD quadratic with eigenvalues spread over ``[mu, L]``."""
    from .models import QuadraticModel

    if not (0 < mu <= L):
        raise ValueError("need 0 < mu <= L")
    rng = np.random.default_rng(seed)
    x_star = rng.standard_normal(d)
    if mu == L:
        A = mu * np.eye(d)
    else:
        eig = np.linspace(mu, L, d) if d > 1 else np.array([mu])
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        q = q * np.sign(np.diag(r))
        A = (q * eig) @ q.T
        A = 0.5 * (A + A.T)
    return QuadraticModel(A, x_star, f_star)


def make_quadratic_clients(
    d: int,
    n: int,
    samples_per_client: int,
    noise: float = 1.0,
    heterogeneity: float = 0.0,
    seed: int = 0,
) -> list:
    """Per-client perturbation samples for the quadratic objective.

    Client ``i`` draws ``h_i + noise * N(0, I)`` with client offsets
    ``h_i ~ heterogeneity * N(0, I)``.  The pooled samples are centred so the
    global objective keeps its stored minimizer.
    """
    rng = np.random.default_rng(seed)
    offsets = heterogeneity * rng.standard_normal((n, d))
    parts = [offsets[i] + noise * rng.standard_normal((samples_per_client, d)) for i in range(n)]
    pooled_mean = np.concatenate(parts).mean(axis=0)
    return [Dataset(p - pooled_mean, np.zeros(len(p), dtype=np.int64), 1) for p in parts]


# -------------------------------------------------------------- partitioning


def partition_quantity_label(ds: Dataset, n: int, labels_per_client: int, seed: int = 0) -> Partition:
    """Each client receives samples from exactly ``labels_per_client`` labels.

    Labels are dealt round-robin over a seeded shuffle; each label's samples
    are split evenly over its holders, the remainder going to the lowest
    client ids.
    """
    C, classes = labels_per_client, ds.classes
    if not (1 <= C <= classes):
        raise PartitionError(f"labels per client must lie in [1, {classes}], got {C}")
    if n < 1:
        raise PartitionError("need at least one client")
    if n * C < classes:
        raise PartitionError(f"infeasible partition: {n} clients x {C} labels < {classes} classes")
    rng = np.random.default_rng(seed)
    order = rng.permutation(classes)
    holders = [[] for _ in range(classes)]
    for client in range(n):
        for j in range(C):
            holders[order[(client * C + j) % classes]].append(client)
    assignments = [[] for _ in range(n)]
    for label in range(classes):
        idx = np.flatnonzero(ds.labels == label)
        idx = idx[rng.permutation(idx.size)]
        for client, chunk in zip(sorted(holders[label]), np.array_split(idx, len(holders[label]))):
            assignments[client].append(chunk)
    assignments = [np.sort(np.concatenate(a)) if a else np.zeros(0, np.int64) for a in assignments]
    return Partition(assignments, weights_from_sizes([a.size for a in assignments]))


class BatchSampler:
    """Mini-batches without replacement within an epoch, reshuffled per epoch.

    A batch that crosses an epoch boundary is completed from the next
    permutation.  ``batch_size >= len(data)`` yields the full set every time.
    """

    def __init__(self, size: int, batch_size: int, seed):
        self.size = size
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self.perm = np.zeros(0, dtype=np.int64)
        self.pos = 0

    def next_indices(self) -> np.ndarray:
        if self.batch_size >= self.size:
            return np.arange(self.size)
        out = []
        need = self.batch_size
        while need:
            if self.pos >= self.perm.size:
                self.perm = self.rng.permutation(self.size)
                self.pos = 0
            take = self.perm[self.pos : self.pos + need]
            self.pos += take.size
            need -= take.size
            out.append(take)
        return np.concatenate(out)

    def state(self) -> dict:
        return {"rng": self.rng.bit_generator.state, "perm": self.perm.tolist(), "pos": self.pos}

    def set_state(self, st: dict) -> None:
        self.rng.bit_generator.state = st["rng"]
        self.perm = np.asarray(st["perm"], dtype=np.int64)
        self.pos = int(st["pos"])
