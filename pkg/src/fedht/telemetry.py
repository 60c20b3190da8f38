"""Per-round records, evaluation metrics, and CSV/JSONL export."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .models import Batch


@dataclass
class RoundRecord:
    round: int
    iteration: int
    gamma_t: float
    lambda_t: float
    global_loss: Optional[float]
    eval_accuracy: Optional[float]
    mean_compression_ratio: float
    dim: int
    clients: list = field(default_factory=list)
    per_client_nnz: list = field(default_factory=list)
    round_bytes: int = 0
    cumulative_bytes: int = 0


FIELDS = [f.name for f in fields(RoundRecord)]
_INT_FIELDS = {"round", "iteration", "dim", "round_bytes", "cumulative_bytes"}
_LIST_FIELDS = {"clients", "per_client_nnz"}
_OPT_FIELDS = {"global_loss", "eval_accuracy"}


def evaluate(model, params, ds) -> tuple[float, Optional[float]]:
    """Mean loss and top-1 accuracy (``None`` for the quadratic objective)."""
    if len(ds) == 0:
        raise ValueError("evaluation set is empty")
    if model.kind == "quadratic":
        return model.loss_and_grad(params, Batch(ds.inputs))[0], None
    loss, _ = model.loss_and_grad(params, Batch(ds.inputs, ds.labels))
    pred = np.argmax(model.logits(params, ds.inputs), axis=1)
    return float(loss), float(np.mean(pred == ds.labels))


def full_gradient(model, params, ds) -> np.ndarray:
    labels = None if model.kind == "quadratic" else ds.labels
    return model.loss_and_grad(params, Batch(ds.inputs, labels))[1]


def estimate_gamma_n(model, clients, weights, params) -> float:
    """Weighted spread of full-batch client gradients around their weighted mean."""
    weights = np.asarray(weights, dtype=np.float64)
    grads = np.stack([full_gradient(model, params, ds) for ds in clients])
    mean = weights @ grads
    return float(weights @ np.sum((grads - mean) ** 2, axis=1))


def equal_traffic_ratio(records) -> float:
    """Transmitted coordinates over ``d`` times the number of uploads."""
    sent = sum(sum(r.per_client_nnz) for r in records)
    slots = sum(r.dim * len(r.per_client_nnz) for r in records)
    return sent / slots if slots else 0.0


def compression_series(records) -> np.ndarray:
    return np.array([r.mean_compression_ratio for r in records])


# --------------------------------------------------------------- export


def _cell(name, value):
    if name in _LIST_FIELDS:
        return " ".join(str(int(v)) for v in value)
    if value is None:
        return ""
    if name in _INT_FIELDS:
        return str(int(value))
    return repr(float(value))


def _uncell(name, text):
    if name in _LIST_FIELDS:
        return [int(v) for v in text.split()]
    if name in _OPT_FIELDS and text == "":
        return None
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


def _json_value(name, value):
    if name in _LIST_FIELDS:
        return [int(v) for v in value]
    if value is None:
        return None
    if name in _INT_FIELDS:
        return int(value)
    value = float(value)
    # JSON has no NaN/Inf literal
    return value if math.isfinite(value) else repr(value)


def export(records, fmt: str, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            if fmt == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(FIELDS)
                for r in records:
                    w.writerow([_cell(k, getattr(r, k)) for k in FIELDS])
            elif fmt == "jsonl":
                for r in records:
                    obj = {k: _json_value(k, v) for k, v in asdict(r).items()}
                    fh.write(json.dumps(obj) + "\n")
            else:
                raise ValueError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc.strerror}") from exc


def import_records(fmt: str, path) -> list:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read records from {path}: {exc.strerror}") from exc
    out = []
    if fmt == "csv":
        rows = csv.reader(text.splitlines())
        header = next(rows, None)
        if header != FIELDS:
            raise ValueError(f"{path}: unexpected csv header {header}")
        for row in rows:
            out.append(RoundRecord(**{k: _uncell(k, v) for k, v in zip(FIELDS, row)}))
    elif fmt == "jsonl":
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            for k in FIELDS:
                if isinstance(obj[k], str):
                    obj[k] = float(obj[k])
            out.append(RoundRecord(**obj))
    else:
        raise ValueError(f"unknown import format {fmt!r}")
    return out
