"""Desk-scale classifiers with closed-form gradients.

Two architectures: plain softmax regression ("linear") and a
one-hidden-layer tanh network ("one_hidden"). Parameters live in a single
flat float64 vector so gradient-descent steps and finite-difference
checks stay trivial. All math is 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInput, NumericalDivergence
from .proxies import ProxyMatrix, softmax
from .rng import Rng

ARCHITECTURES = ("linear", "one_hidden")


def _as_batch(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    return x


@dataclass(frozen=True)
class ToyModel:
    """Flat-parameter classifier; ``params`` layout depends on architecture.

    linear:     [W (C x m), b (C)]
    one_hidden: [W1 (E x m), b1 (E), W2 (C x E), b2 (C)], tanh activation
    """

    architecture: str
    input_dim: int
    num_classes: int
    hidden_width: int
    params: np.ndarray

    @staticmethod
    def param_count(architecture: str, input_dim: int, num_classes: int, hidden_width: int = 0) -> int:
        if architecture == "linear":
            return num_classes * input_dim + num_classes
        if architecture == "one_hidden":
            return (
                hidden_width * input_dim
                + hidden_width
                + num_classes * hidden_width
                + num_classes
            )
        raise InvalidInput(f"unknown architecture {architecture!r}")

    @classmethod
    def initialize(
        cls,
        architecture: str,
        input_dim: int,
        num_classes: int,
        hidden_width: int = 16,
        seed: int = 0,
    ) -> "ToyModel":
        """Seeded init: every parameter uniform in [-0.1, 0.1]."""
        if architecture not in ARCHITECTURES:
            raise InvalidInput(f"unknown architecture {architecture!r}")
        if num_classes < 2 or input_dim < 1:
            raise InvalidInput("need num_classes >= 2 and input_dim >= 1")
        if architecture == "linear":
            hidden_width = 0
        elif hidden_width < 1:
            raise InvalidInput("one_hidden needs hidden_width >= 1")
        n = cls.param_count(architecture, input_dim, num_classes, hidden_width)
        rng = Rng(seed)
        params = np.array([rng.uniform(-0.1, 0.1) for _ in range(n)])
        return cls(architecture, input_dim, num_classes, hidden_width, params)

    def __post_init__(self):
        expected = self.param_count(
            self.architecture, self.input_dim, self.num_classes, self.hidden_width
        )
        p = np.asarray(self.params, dtype=np.float64)
        if p.shape != (expected,):
            raise InvalidInput(f"expected {expected} parameters, got {p.shape}")
        object.__setattr__(self, "params", p)

    def unpack(self):
        m, C, E = self.input_dim, self.num_classes, self.hidden_width
        p = self.params
        if self.architecture == "linear":
            W = p[: C * m].reshape(C, m)
            b = p[C * m :]
            return W, b
        o = 0
        W1 = p[o : o + E * m].reshape(E, m); o += E * m
        b1 = p[o : o + E]; o += E
        W2 = p[o : o + C * E].reshape(C, E); o += C * E
        b2 = p[o:]
        return W1, b1, W2, b2

    def embedding(self, features) -> np.ndarray:
        """Input to the last layer: x itself for linear, tanh hidden otherwise."""
        X = _as_batch(features)
        if self.architecture == "linear":
            return X
        W1, b1, _, _ = self.unpack()
        return np.tanh(X @ W1.T + b1)

    def logits(self, features) -> np.ndarray:
        X = _as_batch(features)
        if self.architecture == "linear":
            W, b = self.unpack()
            return X @ W.T + b
        W1, b1, W2, b2 = self.unpack()
        return np.tanh(X @ W1.T + b1) @ W2.T + b2

    def with_params(self, params: np.ndarray) -> "ToyModel":
        return replace(self, params=np.asarray(params, dtype=np.float64))

    def last_layer_slice(self) -> slice:
        """Slice of ``params`` holding the last layer's weights and bias."""
        if self.architecture == "linear":
            return slice(0, self.params.shape[0])
        m, E = self.input_dim, self.hidden_width
        return slice(E * m + E, self.params.shape[0])


def _mean_ce_and_residual(logits: np.ndarray, labels: np.ndarray):
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    n = labels.shape[0]
    loss = float((lse - z[np.arange(n), labels]).mean())
    resid = softmax(logits)
    resid[np.arange(n), labels] -= 1.0
    return loss, resid


def loss_and_grad(model: ToyModel, features, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its exact flat gradient."""
    X = _as_batch(features)
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim == 0:
        y = y[None]
    if X.shape[0] == 0:
        raise InvalidInput("batch must be nonempty")
    if X.shape[0] != y.shape[0]:
        raise InvalidInput("features and labels disagree on batch size")
    if y.min() < 0 or y.max() >= model.num_classes:
        raise InvalidInput("label out of range")
    n = X.shape[0]
    if model.architecture == "linear":
        loss, dZ = _mean_ce_and_residual(model.logits(X), y)
        dZ /= n
        gW = dZ.T @ X
        gb = dZ.sum(axis=0)
        return loss, np.concatenate([gW.ravel(), gb])
    W1, b1, W2, b2 = model.unpack()
    H = np.tanh(X @ W1.T + b1)
    loss, dZ2 = _mean_ce_and_residual(H @ W2.T + b2, y)
    dZ2 /= n
    gW2 = dZ2.T @ H
    gb2 = dZ2.sum(axis=0)
    dH = dZ2 @ W2
    dZ1 = dH * (1.0 - H * H)
    gW1 = dZ1.T @ X
    gb1 = dZ1.sum(axis=0)
    return loss, np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


def gd_step(model: ToyModel, features, labels, lr: float) -> ToyModel:
    """One plain gradient-descent step; returns a new model."""
    if lr <= 0:
        raise InvalidInput("learning rate must be positive")
    _, grad = loss_and_grad(model, features, labels)
    if not np.all(np.isfinite(grad)):
        raise NumericalDivergence("non-finite gradient")
    new_params = model.params - lr * grad
    if not np.all(np.isfinite(new_params)):
        raise NumericalDivergence("non-finite parameters after update")
    return model.with_params(new_params)


def accuracy(model: ToyModel, features, labels) -> float:
    y = np.asarray(labels, dtype=np.int64)
    pred = model.logits(features).argmax(axis=1)
    return float((pred == y).mean())


def extract_proxies(model: ToyModel, features, labels, mode: str = "class_residual") -> ProxyMatrix:
    """Gradient surrogate per example, rows aligned with the given batch."""
    X = _as_batch(features)
    y = np.asarray(labels, dtype=np.int64)
    logits = model.logits(X)
    resid = softmax(logits)
    resid[np.arange(y.shape[0]), y] -= 1.0
    if mode == "class_residual":
        return ProxyMatrix(resid, mode)
    if mode == "last_layer_full":
        emb = model.embedding(X)
        weight_part = resid[:, :, None] * emb[:, None, :]
        rows = np.concatenate([weight_part.reshape(X.shape[0], -1), resid], axis=1)
        return ProxyMatrix(rows, mode)
    raise InvalidInput(f"unknown proxy mode {mode!r}")


@dataclass(frozen=True)
class LrSchedule:
    """Step-decay schedule: lr is divided by ``decay_factor`` at each epoch
    listed in ``decay_epochs``."""

    base_lr: float
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 10.0

    def __post_init__(self):
        if self.base_lr <= 0 or self.decay_factor <= 0:
            raise InvalidInput("base_lr and decay_factor must be positive")
        object.__setattr__(self, "decay_epochs", tuple(sorted(self.decay_epochs)))

    def lr_at(self, epoch: int) -> float:
        drops = sum(1 for e in self.decay_epochs if e <= epoch)
        return self.base_lr / self.decay_factor**drops
