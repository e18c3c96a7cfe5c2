"""Gradient-descent training loops, with or without the drop defense.

Both entry points share one epoch loop so that a defended run whose
warmup covers the whole schedule is bit-identical to undefended training.
Elimination rounds fire at epochs K, K + T, K + 2T, ... strictly before
that epoch's training pass, using proxies recomputed from the current
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DatasetState, DropRecord
from .defense import DefenseConfig, RoundReport, elimination_round
from .errors import ClassExhausted, DegenerateBudget, InvalidInput, NumericalDivergence
from .models import LrSchedule, ToyModel, accuracy, extract_proxies, gd_step, loss_and_grad
from .rng import Rng


@dataclass(frozen=True)
class BatchMode:
    """"full" takes one GD step per epoch on the whole active set;
    "minibatch" shuffles the active set each epoch and steps per chunk."""

    kind: str = "full"
    size: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("full", "minibatch"):
            raise InvalidInput(f"unknown batch mode {self.kind!r}")
        if self.kind == "minibatch" and self.size < 1:
            raise InvalidInput("minibatch size must be >= 1")


@dataclass
class Instrumentation:
    """Optional per-epoch recordings used by diagnostics and the
    convergence bench.

    Loss and gradient series use the summed training objective (sum of
    per-example losses over the whole original pool for "full", over the
    current active set for "subset"), matching the objective whose
    gradient-descent dynamics the convergence bound describes. A trainer
    stepping with learning rate lr on the mean loss takes the identical
    steps as lr / total_examples on the sum.
    """

    record_full_gradients: bool = False
    record_proxy_snapshots: bool = False
    poison_indices: np.ndarray | None = None
    target_features: np.ndarray | None = None
    target_label: int | None = None
    proxy_mode: str = "class_residual"

    total_examples: int = 0
    full_losses: list[float] = field(default_factory=list)
    full_grads: list[np.ndarray] = field(default_factory=list)
    subset_grads: list[np.ndarray] = field(default_factory=list)
    proxy_snapshots: list[np.ndarray] = field(default_factory=list)
    poison_proxies: list[np.ndarray] = field(default_factory=list)
    target_proxies: list[np.ndarray] = field(default_factory=list)

    def effective_lr(self, mean_loss_lr: float) -> float:
        """Step size w.r.t. the summed objective for a mean-loss trainer."""
        if self.total_examples == 0:
            raise InvalidInput("no epochs recorded yet")
        return mean_loss_lr / self.total_examples

    @property
    def tracks_poisons(self) -> bool:
        return (
            self.poison_indices is not None
            and self.target_features is not None
            and self.target_label is not None
        )


@dataclass
class TrainTrace:
    """Per-epoch series plus the defense's round reports."""

    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    active_counts: list[int] = field(default_factory=list)
    rounds: list[RoundReport] = field(default_factory=list)

    def to_jsonable(self) -> dict:
        return {
            "loss": self.losses,
            "accuracy": self.accuracies,
            "lr": self.lrs,
            "active_count": self.active_counts,
            "rounds": [r.to_jsonable() for r in self.rounds],
        }


def _record_epoch(model, dataset, instrument):
    if instrument is None:
        return
    instrument.total_examples = dataset.size
    if instrument.record_full_gradients:
        n = dataset.size
        n_active = dataset.active.shape[0]
        full_loss, full_grad = loss_and_grad(model, dataset.features, dataset.labels)
        _, subset_grad = loss_and_grad(
            model, dataset.active_features(), dataset.active_labels()
        )
        instrument.full_losses.append(full_loss * n)
        instrument.full_grads.append(full_grad * n)
        instrument.subset_grads.append(subset_grad * n_active)
    if instrument.record_proxy_snapshots:
        snap = extract_proxies(
            model, dataset.active_features(), dataset.active_labels(), instrument.proxy_mode
        )
        instrument.proxy_snapshots.append(snap.rows.copy())
    if instrument.tracks_poisons:
        idx = np.asarray(instrument.poison_indices, dtype=np.int64)
        rows = extract_proxies(
            model, dataset.features[idx], dataset.labels[idx], instrument.proxy_mode
        )
        instrument.poison_proxies.append(rows.rows.copy())
        tgt = extract_proxies(
            model,
            np.asarray(instrument.target_features)[None, :],
            np.array([instrument.target_label]),
            instrument.proxy_mode,
        )
        instrument.target_proxies.append(tgt.rows[0].copy())


def _training_loop(
    model: ToyModel,
    dataset: DatasetState,
    schedule: LrSchedule,
    epochs: int,
    batch: BatchMode,
    defense: DefenseConfig | None,
    instrument: Instrumentation | None,
    random_drops: dict[int, int] | None = None,
    drop_seed: int = 0,
) -> tuple[ToyModel, TrainTrace]:
    if epochs < 0:
        raise InvalidInput("epochs must be >= 0")
    if dataset.active.shape[0] == 0:
        raise InvalidInput("dataset has no active examples")
    trace = TrainTrace()
    shuffle_rng = Rng(batch.seed) if batch.kind == "minibatch" else None
    drop_rng = Rng(drop_seed) if random_drops is not None else None
    round_index = 0
    for epoch in range(epochs):
        if defense is not None and epoch >= defense.warmup_epochs:
            if (epoch - defense.warmup_epochs) % defense.interval_epochs == 0:
                proxies = extract_proxies(
                    model, dataset.active_features(), dataset.active_labels(),
                    defense.proxy_mode,
                )
                report = elimination_round(
                    dataset, proxies, defense, epoch=epoch, round_index=round_index
                )
                trace.rounds.append(report)
                round_index += 1
                counts = dataset.class_counts()
                if (counts == 0).any():
                    empty = int(np.nonzero(counts == 0)[0][0])
                    raise ClassExhausted(
                        f"class {empty} emptied at epoch {epoch}", trace
                    )
        if random_drops is not None and random_drops.get(epoch, 0) > 0:
            count = random_drops[epoch]
            active = dataset.active.tolist()
            if count > len(active):
                raise InvalidInput(
                    f"cannot drop {count} of {len(active)} active examples"
                )
            picks = sorted(active[p] for p in drop_rng.sample_indices(len(active), count))
            dataset.drop(
                picks,
                [DropRecord(epoch, int(dataset.labels[i]), -1) for i in picks],
            )
        X = dataset.active_features()
        y = dataset.active_labels()
        loss, _ = loss_and_grad(model, X, y)
        trace.losses.append(loss)
        trace.accuracies.append(accuracy(model, X, y))
        lr = schedule.lr_at(epoch)
        trace.lrs.append(lr)
        trace.active_counts.append(int(dataset.active.shape[0]))
        _record_epoch(model, dataset, instrument)
        try:
            if batch.kind == "full":
                model = gd_step(model, X, y, lr)
            else:
                order = list(range(X.shape[0]))
                shuffle_rng.shuffle(order)
                for start in range(0, len(order), batch.size):
                    chunk = order[start : start + batch.size]
                    model = gd_step(model, X[chunk], y[chunk], lr)
        except NumericalDivergence as exc:
            raise NumericalDivergence(f"{exc} (epoch {epoch})", epoch=epoch) from None
    return model, trace


def train(
    model: ToyModel,
    dataset: DatasetState,
    schedule: LrSchedule,
    epochs: int,
    batch: BatchMode = BatchMode(),
    instrument: Instrumentation | None = None,
) -> tuple[ToyModel, TrainTrace]:
    """Undefended training on the dataset's active set."""
    return _training_loop(model, dataset, schedule, epochs, batch, None, instrument)


def run_defense(
    model: ToyModel,
    dataset: DatasetState,
    config: DefenseConfig,
    schedule: LrSchedule,
    total_epochs: int,
    batch: BatchMode = BatchMode(),
    instrument: Instrumentation | None = None,
) -> tuple[ToyModel, TrainTrace]:
    """Warmup, then periodic elimination rounds between training passes.

    Mutates ``dataset`` (its active set shrinks). A medoid fraction of 1.0
    with the class-size guard disabled would make every point an isolated
    medoid, so that configuration is refused outright.
    """
    if config.medoid_fraction == 1.0 and config.min_class_size_guard == 0:
        raise DegenerateBudget(
            "medoid_fraction 1.0 with the class-size guard disabled makes "
            "every point an isolated medoid"
        )
    counts = dataset.class_counts()
    if (counts == 0).any():
        empty = int(np.nonzero(counts == 0)[0][0])
        raise InvalidInput(f"class {empty} has no active examples")
    return _training_loop(
        model, dataset, schedule, total_epochs, batch, config, instrument
    )


def run_random_drop_baseline(
    model: ToyModel,
    dataset: DatasetState,
    schedule: LrSchedule,
    epochs: int,
    drop_schedule: dict[int, int],
    seed: int,
    batch: BatchMode = BatchMode(),
    instrument: Instrumentation | None = None,
) -> tuple[ToyModel, TrainTrace]:
    """Control arm for drop-perturbation comparisons: drops the given
    number of uniformly random active examples at each scheduled epoch
    (before that epoch's training pass), otherwise trains identically.
    Drop records carry medoid_rank -1 since no selection took place.
    """
    return _training_loop(
        model, dataset, schedule, epochs, batch, None, instrument,
        random_drops=dict(drop_schedule), drop_seed=seed,
    )
