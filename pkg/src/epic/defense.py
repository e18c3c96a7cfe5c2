"""Per-class medoid selection and isolated-medoid elimination.

One elimination round runs per class: select k_c medoids of the class's
gradient proxies by greedy facility-location maximization, assign every
class member to its nearest medoid, and drop exactly the medoids to which
nothing else was assigned (count 1). Classes below the size guard, or
whose budget would make every member a medoid, are skipped untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetState, DropRecord
from .errors import InvalidInput
from .facility import FacilityObjective, greedy_select
from .proxies import DistanceOracle, ProxyMatrix
from .rng import derive_seed

PROXY_MODES = ("class_residual", "last_layer_full")


@dataclass(frozen=True)
class DefenseConfig:
    """Defaults mirror the 40-epoch pipeline: 10 warmup epochs and a
    2-epoch drop interval for a 10% medoid budget."""

    warmup_epochs: int = 10
    interval_epochs: int = 2
    medoid_fraction: float = 0.1
    greedy_mode: str = "lazy"
    proxy_mode: str = "class_residual"
    seed: int = 0
    min_class_size_guard: int = 10

    def __post_init__(self):
        if self.warmup_epochs < 0:
            raise InvalidInput("warmup_epochs must be >= 0")
        if self.interval_epochs < 1:
            raise InvalidInput("interval_epochs must be >= 1")
        if not 0.0 < self.medoid_fraction <= 1.0:
            raise InvalidInput("medoid_fraction must be in (0, 1]")
        if self.proxy_mode not in PROXY_MODES:
            raise InvalidInput(f"unknown proxy mode {self.proxy_mode!r}")
        if self.min_class_size_guard < 0:
            raise InvalidInput("min_class_size_guard must be >= 0")


def medoid_budget(fraction: float, class_size: int) -> int:
    """k_c = max(1, round(fraction * |V_c|)), rounding half up."""
    return max(1, math.floor(fraction * class_size + 0.5))


@dataclass(frozen=True)
class ClassRound:
    """Selection outcome for one class within one elimination round."""

    label: int
    members: int
    k: int
    c0: float
    medoids: tuple[int, ...]  # dataset indices, selection order
    gains: tuple[float, ...]
    gamma: tuple[int, ...]  # aligned with medoids
    dropped: tuple[int, ...]
    assignment: dict[int, int]  # dataset index -> medoid dataset index
    skipped: str | None = None  # "guard" | "budget" when untouched

    def to_jsonable(self) -> dict:
        return {
            "label": self.label,
            "members": self.members,
            "k": self.k,
            "c0": self.c0,
            "medoids": list(self.medoids),
            "gains": list(self.gains),
            "gamma": list(self.gamma),
            "dropped": list(self.dropped),
            "assignment": [[i, j] for i, j in sorted(self.assignment.items())],
            "skipped": self.skipped,
        }


@dataclass
class RoundReport:
    """All per-class outcomes of one elimination round."""

    epoch: int
    round_index: int
    classes: list[ClassRound] = field(default_factory=list)

    @property
    def dropped(self) -> tuple[int, ...]:
        out: list[int] = []
        for cr in self.classes:
            out.extend(cr.dropped)
        return tuple(sorted(out))

    def to_jsonable(self) -> dict:
        return {
            "epoch": self.epoch,
            "round_index": self.round_index,
            "classes": [cr.to_jsonable() for cr in self.classes],
            "dropped": list(self.dropped),
        }


def elimination_round(
    dataset: DatasetState,
    proxies: ProxyMatrix,
    config: DefenseConfig,
    epoch: int = 0,
    round_index: int = 0,
) -> RoundReport:
    """Run one drop round over every class; mutates ``dataset.active``.

    ``proxies`` rows must align with ``dataset.active`` order.
    """
    active = dataset.active
    if proxies.n != active.shape[0]:
        raise InvalidInput(
            f"{proxies.n} proxy rows for {active.shape[0]} active examples"
        )
    labels = dataset.active_labels()
    report = RoundReport(epoch=epoch, round_index=round_index)
    for label in range(dataset.num_classes):
        positions = np.nonzero(labels == label)[0]
        members = positions.shape[0]
        if members == 0:
            continue
        originals = active[positions]
        k = medoid_budget(config.medoid_fraction, members)
        if members <= config.min_class_size_guard or k >= members:
            reason = "guard" if members <= config.min_class_size_guard else "budget"
            report.classes.append(
                ClassRound(label, members, k, 0.0, (), (), (), (), {}, reason)
            )
            continue
        oracle = DistanceOracle(proxies.subset(positions), cache="full")
        objective = FacilityObjective(oracle)
        selection = greedy_select(
            objective,
            k,
            mode=config.greedy_mode,
            seed=derive_seed(config.seed, round_index, label),
        )
        to_global = lambda loc: int(originals[loc])
        medoids = tuple(to_global(j) for j in selection.medoids)
        gamma = tuple(selection.gamma[j] for j in selection.medoids)
        dropped = tuple(
            to_global(j) for j in selection.medoids if selection.gamma[j] == 1
        )
        assignment = {
            to_global(i): to_global(j) for i, j in selection.assignment.items()
        }
        report.classes.append(
            ClassRound(
                label=label,
                members=members,
                k=k,
                c0=objective.c0,
                medoids=medoids,
                gains=selection.gains,
                gamma=gamma,
                dropped=dropped,
                assignment=assignment,
            )
        )
        if dropped:
            ranks = {g: r for r, g in enumerate(medoids)}
            dataset.drop(
                dropped,
                [DropRecord(epoch, label, ranks[g]) for g in dropped],
            )
    return report


def cluster_histogram(report: RoundReport, poison_mask: np.ndarray | None = None) -> dict:
    """Histogram over cluster sizes, splitting members into clean/poison.

    Keys are cluster sizes (the count assigned to a medoid, itself
    included); values are {"clean": n, "poison": n}, or {"unknown": n}
    when no ground-truth mask is available. Point totals per class equal
    the class size, so the histogram is a partition of the round's
    non-skipped classes.
    """
    hist: dict[int, dict[str, int]] = {}
    for cr in report.classes:
        if cr.skipped is not None:
            continue
        members_of: dict[int, list[int]] = {m: [] for m in cr.medoids}
        for i, j in cr.assignment.items():
            members_of[j].append(i)
        for medoid, members in members_of.items():
            size = len(members)
            if size == 0:
                continue  # shadowed duplicate medoid, covered elsewhere
            bucket = hist.setdefault(
                size, {"unknown": 0} if poison_mask is None else {"clean": 0, "poison": 0}
            )
            for i in members:
                if poison_mask is None:
                    bucket["unknown"] += 1
                elif poison_mask[i]:
                    bucket["poison"] += 1
                else:
                    bucket["clean"] += 1
    return hist


@dataclass(frozen=True)
class CosineTrace:
    """Per-epoch mean cosine similarities; None where no valid pair exists."""

    poison_poison: tuple[float | None, ...]
    poison_target: tuple[float | None, ...]
    skipped_pairs: tuple[int, ...]

    def to_jsonable(self) -> dict:
        return {
            "poison_poison": list(self.poison_poison),
            "poison_target": list(self.poison_target),
            "skipped_pairs": list(self.skipped_pairs),
        }


def _cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    na = float(np.sqrt((a * a).sum()))
    nb = float(np.sqrt((b * b).sum()))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cosine_alignment_trace(poison_proxies_per_epoch, target_proxy_per_epoch) -> CosineTrace:
    """Trace of poison/poison and poison/target gradient alignments.

    Zero-norm proxies cannot form a cosine; such pairs are skipped and
    counted per epoch.
    """
    if len(poison_proxies_per_epoch) != len(target_proxy_per_epoch):
        raise InvalidInput("per-epoch series lengths disagree")
    pp: list[float | None] = []
    pt: list[float | None] = []
    skipped: list[int] = []
    for rows, target in zip(poison_proxies_per_epoch, target_proxy_per_epoch):
        P = np.asarray(rows, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] < 1:
            raise InvalidInput("each epoch needs at least one poison proxy row")
        t = np.asarray(target, dtype=np.float64)
        skip = 0
        pair_vals = []
        for i in range(P.shape[0]):
            for j in range(i + 1, P.shape[0]):
                c = _cosine(P[i], P[j])
                if c is None:
                    skip += 1
                else:
                    pair_vals.append(c)
        tgt_vals = []
        for i in range(P.shape[0]):
            c = _cosine(P[i], t)
            if c is None:
                skip += 1
            else:
                tgt_vals.append(c)
        pp.append(sum(pair_vals) / len(pair_vals) if pair_vals else None)
        pt.append(sum(tgt_vals) / len(tgt_vals) if tgt_vals else None)
        skipped.append(skip)
    return CosineTrace(tuple(pp), tuple(pt), tuple(skipped))
