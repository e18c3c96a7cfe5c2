"""Per-example gradient surrogates and distances between them.

The clustering space for medoid selection is the gradient of the
cross-entropy loss with respect to the input of the classifier's last
layer. For softmax cross-entropy that gradient has the closed form
softmax(logits) - onehot(label), so it is barely more expensive than the
loss itself. A richer variant is the exact last-layer weight-and-bias
gradient, the flattened outer product of that residual with the
penultimate embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput

PROXY_MODES = ("class_residual", "last_layer_full")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def class_residual_proxy(logits, label: int) -> np.ndarray:
    """softmax(logits) - onehot(label): the loss gradient w.r.t. the logits.

    Entries sum to zero and each lies in [-1, 1].
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise InvalidInput("logits must be a vector with at least 2 classes")
    if not np.all(np.isfinite(z)):
        raise InvalidInput("logits must be finite")
    if not 0 <= label < z.shape[0]:
        raise InvalidInput(f"label {label} out of range for {z.shape[0]} classes")
    r = softmax(z)
    r[label] -= 1.0
    return r


def last_layer_full_proxy(embedding, logits, label: int) -> np.ndarray:
    """Exact last-layer weight+bias gradient, flattened row-major.

    Layout: the C x E weight gradient residual (x) embedding first, then the
    length-C bias gradient (the residual itself). Length C*(E+1).
    """
    emb = np.asarray(embedding, dtype=np.float64)
    if emb.ndim != 1 or emb.shape[0] < 1:
        raise InvalidInput("embedding must be a non-empty vector")
    if not np.all(np.isfinite(emb)):
        raise InvalidInput("embedding must be finite")
    r = class_residual_proxy(logits, label)
    return np.concatenate([np.outer(r, emb).ravel(), r])


@dataclass
class ProxyMatrix:
    """n x d matrix of per-example gradient surrogates, float64, finite."""

    rows: np.ndarray
    mode: str = "external"

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows), dtype=np.float64)
        if rows.ndim != 2:
            raise InvalidInput("proxy matrix must be 2-dimensional")
        if not np.all(np.isfinite(rows)):
            raise InvalidInput("proxy matrix contains non-finite entries")
        self.rows = rows

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def subset(self, positions) -> "ProxyMatrix":
        """Row-sliced copy (positions are row numbers of this matrix)."""
        return ProxyMatrix(self.rows[np.asarray(positions, dtype=np.intp)], self.mode)


def _as_rows(source) -> np.ndarray:
    if isinstance(source, ProxyMatrix):
        return source.rows
    return ProxyMatrix(np.asarray(source)).rows


@dataclass
class DistanceOracle:
    """Euclidean distances between proxy rows.

    cache="full" precomputes the whole matrix; cache="ondemand" recomputes
    rows per query. Both paths evaluate the identical float expression, so
    they agree bit for bit.
    """

    source: ProxyMatrix | np.ndarray
    cache: str = "full"
    _rows: np.ndarray = field(init=False, repr=False)
    _matrix: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.cache not in ("full", "ondemand"):
            raise InvalidInput(f"unknown cache policy {self.cache!r}")
        self._rows = _as_rows(self.source)
        if self.cache == "full":
            self._matrix = np.stack([self._row(i) for i in range(self.n)])

    @property
    def n(self) -> int:
        return self._rows.shape[0]

    def _row(self, i: int) -> np.ndarray:
        diff = self._rows - self._rows[i]
        return np.sqrt((diff * diff).sum(axis=1))

    def _check(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise InvalidInput(f"index {i} out of range for {self.n} rows")

    def row(self, i: int) -> np.ndarray:
        self._check(i)
        if self._matrix is not None:
            return self._matrix[i]
        return self._row(i)

    def distance(self, i: int, j: int) -> float:
        self._check(i)
        self._check(j)
        if self._matrix is not None:
            return float(self._matrix[i, j])
        return float(self._row(i)[j])


def pairwise_distance(proxies, i: int, j: int) -> float:
    """Euclidean distance between proxy rows i and j."""
    rows = _as_rows(proxies)
    n = rows.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise InvalidInput(f"indices ({i}, {j}) out of range for {n} rows")
    diff = rows[j] - rows[i]
    return float(np.sqrt((diff * diff).sum()))
