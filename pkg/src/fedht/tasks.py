"""Turn a data/model configuration into client datasets and an objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import data as D
from .config import ExperimentConfig
from .models import build_model


@dataclass
class Task:
    model: object
    clients: list
    weights: np.ndarray
    train: D.Dataset
    test: Optional[D.Dataset]
    x0: np.ndarray

    @property
    def dim(self) -> int:
        return self.model.dim


def _concat(parts) -> D.Dataset:
    return D.Dataset(
        np.concatenate([p.inputs for p in parts]),
        np.concatenate([p.labels for p in parts]),
        parts[0].classes,
    )


def build_task(cfg: ExperimentConfig) -> Task:
    dc, seed = cfg.data, cfg.data_seed
    if dc.kind == "quadratic":
        model = D.make_quadratic(dc.dim, dc.mu, dc.L, seed=seed)
        clients = D.make_quadratic_clients(
            dc.dim, cfg.n, dc.samples_per_client, dc.noise, dc.heterogeneity, seed=seed + 1
        )
        x0 = dc.x0_scale * np.random.default_rng(seed + 2).standard_normal(dc.dim)
        weights = D.weights_from_sizes([len(c) for c in clients])
        return Task(model, clients, weights, _concat(clients), None, x0)

    if dc.kind == "blobs":
        full = D.make_blobs(dc.samples, dc.features, dc.classes, dc.separation, dc.noise, seed=seed,
                            scale=dc.scale)
        if dc.holdout > 0:
            train, test = D.split_holdout(full, dc.holdout, seed=seed + 1)
        else:
            train, test = full, None
    else:
        train = D.load_idx_dataset(dc.train_images, dc.train_labels, dc.classes)
        test = None
        if dc.test_images:
            test = D.load_idx_dataset(dc.test_images, dc.test_labels, dc.classes)
        if dc.limit:
            train = train.subset(np.arange(min(dc.limit, len(train))))
    C = dc.labels_per_client or train.classes
    part = D.partition_quantity_label(train, cfg.n, C, seed=seed + 3)
    clients = [train.subset(a) for a in part.assignments]
    if any(len(c) == 0 for c in clients):
        raise D.PartitionError("a client received no samples")
    model = build_model(cfg.model.kind, train.features, train.classes, cfg.model.hidden)
    x0 = model.init_params(np.random.default_rng(seed + 4))
    pooled = train.subset(np.concatenate(part.assignments))
    return Task(model, clients, part.weights, pooled, test, x0)
