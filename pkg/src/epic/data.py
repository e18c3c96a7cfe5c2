"""Labeled example pools with an active set and a cumulative drop ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .rng import Rng


@dataclass(frozen=True)
class DropRecord:
    """Provenance of one dropped example."""

    epoch: int
    class_label: int
    medoid_rank: int  # position in the round's selection order


@dataclass
class DatasetState:
    """Feature/label pool whose active index set shrinks monotonically.

    ``active`` is kept sorted ascending; ``dropped`` maps index to its
    DropRecord. The two always partition the original index universe.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    poison_mask: np.ndarray | None = None
    active: np.ndarray = field(init=False)
    dropped: dict[int, DropRecord] = field(init=False, default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise InvalidInput("features must be n x m with n matching labels")
        if X.shape[0] == 0:
            raise InvalidInput("dataset must be nonempty")
        if not np.all(np.isfinite(X)):
            raise InvalidInput("features must be finite")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise InvalidInput("label out of range")
        if self.poison_mask is not None:
            mask = np.asarray(self.poison_mask, dtype=bool)
            if mask.shape != y.shape:
                raise InvalidInput("poison mask shape mismatch")
            self.poison_mask = mask
        self.features = X
        self.labels = y
        self.active = np.arange(X.shape[0], dtype=np.int64)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def clone(self) -> "DatasetState":
        fresh = DatasetState(
            self.features.copy(),
            self.labels.copy(),
            self.num_classes,
            None if self.poison_mask is None else self.poison_mask.copy(),
        )
        fresh.active = self.active.copy()
        fresh.dropped = dict(self.dropped)
        return fresh

    def with_features(self, features: np.ndarray) -> "DatasetState":
        """Same pool with replaced feature matrix (e.g. poisoned inputs)."""
        fresh = DatasetState(
            features,
            self.labels.copy(),
            self.num_classes,
            None if self.poison_mask is None else self.poison_mask.copy(),
        )
        fresh.active = self.active.copy()
        fresh.dropped = dict(self.dropped)
        return fresh

    def active_features(self) -> np.ndarray:
        return self.features[self.active]

    def active_labels(self) -> np.ndarray:
        return self.labels[self.active]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.active_labels(), minlength=self.num_classes)

    def drop(self, indices, records) -> None:
        """Remove indices from the active set permanently."""
        idx = [int(i) for i in indices]
        if len(idx) != len(records):
            raise InvalidInput("one provenance record per dropped index")
        active_set = set(self.active.tolist())
        for i, rec in zip(idx, records):
            if i in self.dropped:
                raise InvalidInput(f"index {i} already dropped")
            if i not in active_set:
                raise InvalidInput(f"index {i} is not active")
            self.dropped[i] = rec
            active_set.remove(i)
        self.active = np.array(sorted(active_set), dtype=np.int64)


def blob_centers(num_classes: int, dim: int, center_distance: float) -> np.ndarray:
    """Class centers evenly spaced on a circle in the first two dims."""
    if dim < 2:
        raise InvalidInput("blob generation needs dim >= 2")
    centers = np.zeros((num_classes, dim))
    for c in range(num_classes):
        angle = 2.0 * math.pi * c / num_classes
        centers[c, 0] = center_distance * math.cos(angle)
        centers[c, 1] = center_distance * math.sin(angle)
    return centers


def make_blobs(
    per_class: int,
    num_classes: int = 2,
    dim: int = 2,
    center_distance: float = 3.0,
    noise: float = 1.0,
    seed: int = 0,
) -> DatasetState:
    """Isotropic Gaussian blobs, one per class, deterministic in the seed."""
    if per_class < 1 or num_classes < 2:
        raise InvalidInput("need per_class >= 1 and num_classes >= 2")
    centers = blob_centers(num_classes, dim, center_distance)
    rng = Rng(seed)
    rows = []
    labels = []
    for c in range(num_classes):
        for _ in range(per_class):
            point = centers[c] + noise * np.array(rng.normals(dim))
            rows.append(point)
            labels.append(c)
    return DatasetState(np.array(rows), np.array(labels), num_classes)


def plant_outliers(
    dataset: DatasetState,
    depths,
    source_class: int,
    toward_class: int,
    center_distance: float,
) -> DatasetState:
    """Append mislabeled interpolants between two class centers.

    Each depth t places a point at (1 - t) * center_src + t * center_dst
    with the source class label; depth 1 sits exactly on the destination
    center, so depths near or beyond 1 become confidently-wrong gradient
    outliers once a model fits the blobs. The returned dataset carries a
    poison mask marking the planted rows.
    """
    if source_class == toward_class:
        raise InvalidInput("outliers must point toward a different class")
    centers = blob_centers(dataset.num_classes, dataset.features.shape[1], center_distance)
    src, dst = centers[source_class], centers[toward_class]
    extra = np.array([(1.0 - t) * src + t * dst for t in depths])
    features = np.concatenate([dataset.features, extra])
    labels = np.concatenate(
        [dataset.labels, np.full(len(depths), source_class, dtype=np.int64)]
    )
    mask = np.zeros(features.shape[0], dtype=bool)
    if dataset.poison_mask is not None:
        mask[: dataset.size] = dataset.poison_mask
    mask[dataset.size :] = True
    return DatasetState(features, labels, dataset.num_classes, mask)
