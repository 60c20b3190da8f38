"""Training objectives with analytic gradients over flat parameter vectors.

Parameter layouts (row-major blocks, concatenated):

* logistic: ``W (classes, features)``, ``b (classes,)``
* mlp: ``W1 (hidden, features)``, ``b1 (hidden,)``, ``W2 (classes, hidden)``, ``b2 (classes,)``
* quadratic: ``x (d,)``

The quadratic's "samples" are perturbation vectors ``z``; a batch adds the
linear term ``mean(z) . (x - x_star)``, which makes mini-batch gradients
noisy while the pooled objective (whose ``z`` average to zero) keeps its
minimizer at ``x_star``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np


class Batch(NamedTuple):
    inputs: np.ndarray
    labels: Optional[np.ndarray] = None


def _check(params, d):
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (d,):
        raise ValueError(f"expected {d} parameters, got shape {params.shape}")
    return params


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _cross_entropy(logits, labels):
    logp = _log_softmax(logits)
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    # dL/dlogits
    g = np.exp(logp)
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


@dataclass(frozen=True)
class LogisticModel:
    features: int
    classes: int
    kind: str = "logistic"

    @property
    def dim(self) -> int:
        return self.features * self.classes + self.classes

    def unpack(self, params):
        fc = self.features * self.classes
        return params[:fc].reshape(self.classes, self.features), params[fc:]

    def init_params(self, rng=None) -> np.ndarray:
        return np.zeros(self.dim)

    def logits(self, params, inputs):
        W, b = self.unpack(_check(params, self.dim))
        return inputs @ W.T + b

    def loss_and_grad(self, params, batch: Batch):
        W, b = self.unpack(_check(params, self.dim))
        X = np.asarray(batch.inputs, dtype=np.float64)
        loss, gz = _cross_entropy(X @ W.T + b, batch.labels)
        return loss, np.concatenate([(gz.T @ X).ravel(), gz.sum(axis=0)])


@dataclass(frozen=True)
class MLPModel:
    features: int
    classes: int
    hidden: int = 64
    kind: str = "mlp"

    @property
    def dim(self) -> int:
        h = self.hidden
        return h * self.features + h + self.classes * h + self.classes

    def unpack(self, params):
        h, f, c = self.hidden, self.features, self.classes
        o1 = h * f
        o2 = o1 + h
        o3 = o2 + c * h
        return (
            params[:o1].reshape(h, f),
            params[o1:o2],
            params[o2:o3].reshape(c, h),
            params[o3:],
        )

    def init_params(self, rng=None) -> np.ndarray:
        rng = np.random.default_rng(0) if rng is None else rng
        h, f, c = self.hidden, self.features, self.classes
        W1 = rng.normal(0.0, np.sqrt(2.0 / f), size=(h, f))
        W2 = rng.normal(0.0, np.sqrt(1.0 / h), size=(c, h))
        return np.concatenate([W1.ravel(), np.zeros(h), W2.ravel(), np.zeros(c)])

    def logits(self, params, inputs):
        W1, b1, W2, b2 = self.unpack(_check(params, self.dim))
        return np.maximum(inputs @ W1.T + b1, 0.0) @ W2.T + b2

    def loss_and_grad(self, params, batch: Batch):
        W1, b1, W2, b2 = self.unpack(_check(params, self.dim))
        X = np.asarray(batch.inputs, dtype=np.float64)
        pre = X @ W1.T + b1
        act = np.maximum(pre, 0.0)
        loss, gz = _cross_entropy(act @ W2.T + b2, batch.labels)
        gact = (gz @ W2) * (pre > 0)
        grad = np.concatenate(
            [(gact.T @ X).ravel(), gact.sum(axis=0), (gz.T @ act).ravel(), gz.sum(axis=0)]
        )
        return loss, grad


@dataclass(frozen=True, eq=False)
class QuadraticModel:
    """``0.5 (x - x_star)^T A (x - x_star) + f_star``; A symmetric positive definite."""

    A: np.ndarray
    x_star: np.ndarray
    f_star: float = 0.0
    kind: str = "quadratic"

    @property
    def dim(self) -> int:
        return int(self.x_star.shape[0])

    @property
    def mu(self) -> float:
        return float(np.linalg.eigvalsh(self.A)[0])

    @property
    def L(self) -> float:
        return float(np.linalg.eigvalsh(self.A)[-1])

    def init_params(self, rng=None) -> np.ndarray:
        return np.zeros(self.dim)

    def loss_and_grad(self, params, batch: Optional[Batch] = None):
        r = _check(params, self.dim) - self.x_star
        Ar = self.A @ r
        loss = 0.5 * float(r @ Ar) + self.f_star
        grad = Ar
        if batch is not None and len(batch.inputs):
            zbar = np.asarray(batch.inputs, dtype=np.float64).mean(axis=0)
            loss += float(zbar @ r)
            grad = Ar + zbar
        return loss, grad


def loss(model, params, batch=None) -> float:
    return model.loss_and_grad(params, batch)[0]


def gradient(model, params, batch=None) -> np.ndarray:
    return model.loss_and_grad(params, batch)[1]


def local_sgd_step(params, grad, gamma: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ValueError("params and grad must have the same shape")
    return params - gamma * grad


def build_model(kind: str, features: int = 0, classes: int = 0, hidden: int = 64, quadratic=None):
    if kind == "logistic":
        return LogisticModel(features, classes)
    if kind == "mlp":
        return MLPModel(features, classes, hidden)
    if kind == "quadratic":
        if quadratic is None:
            raise ValueError("quadratic model needs its (A, x_star, f_star) definition")
        return quadratic
    raise ValueError(f"unknown model kind {kind!r}")
