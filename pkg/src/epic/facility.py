"""Monotone submodular facility-location maximization for medoid selection.

For candidates V with pairwise distances d and an offset c0 >= max d, the
objective is F(S) = sum_i max_{j in S} (c0 - d(i, j)), with F(empty) = 0.
Maximizing F under a cardinality budget extracts the set of k medoids.
Greedy selection carries the classic (1 - 1/e) approximation guarantee for
monotone submodular objectives; a brute-force maximizer is included as a
test oracle.

All tie-breaks resolve to the lowest original index so that every mode is
deterministic, and lazy greedy reproduces the naive greedy sequence
exactly.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InstanceTooLarge, InvalidInput
from .proxies import DistanceOracle
from .rng import Rng

GREEDY_MODES = ("naive", "lazy", "stochastic")


@dataclass(frozen=True)
class MedoidSelection:
    """Outcome of a selection: medoids in pick order, their marginal gains,
    the nearest-medoid assignment, and per-medoid assigned counts."""

    medoids: tuple[int, ...]
    gains: tuple[float, ...]
    assignment: dict[int, int]
    gamma: dict[int, int]
    objective_value: float


class FacilityObjective:
    """Facility-location objective over one class of candidate indices.

    ``indices`` are positions into ``oracle``'s rows; they are stored in
    ascending order (the tie-break order). ``c0`` defaults to the exact
    maximum pairwise distance among the candidates, the tightest offset
    that keeps every coverage term nonnegative.
    """

    def __init__(self, oracle: DistanceOracle, indices=None, c0: float | None = None):
        if indices is None:
            indices = range(oracle.n)
        idx = sorted(int(i) for i in indices)
        if not idx:
            raise InvalidInput("facility objective needs at least one candidate")
        if len(set(idx)) != len(idx):
            raise InvalidInput("candidate indices must be unique")
        if idx[0] < 0 or idx[-1] >= oracle.n:
            raise InvalidInput("candidate index out of oracle range")
        self.oracle = oracle
        self.indices: tuple[int, ...] = tuple(idx)
        self._pos = {g: p for p, g in enumerate(self.indices)}
        dist = np.stack([oracle.row(i)[idx] for i in idx])
        max_d = float(dist.max())
        if c0 is None:
            c0 = max_d
        elif c0 < max_d:
            raise InvalidInput(f"c0={c0} below max pairwise distance {max_d}")
        self.c0 = float(c0)
        self._dist = dist
        self._cover = self.c0 - dist  # cover[i, j]: value facility j gives point i

    @property
    def size(self) -> int:
        return len(self.indices)

    def _locals(self, subset) -> list[int]:
        try:
            return [self._pos[int(g)] for g in subset]
        except KeyError as exc:
            raise InvalidInput(f"index {exc.args[0]} is not a candidate") from None

    def value(self, subset) -> float:
        """F(S); 0.0 for the empty set.

        Accumulates left to right so an independent loop reproduces it
        exactly.
        """
        locs = self._locals(subset)
        if not locs:
            return 0.0
        total = 0.0
        for i in range(self.size):
            total += max(self._cover[i, j] for j in locs)
        return total

    def _gain(self, j: int, best: np.ndarray) -> float:
        """Marginal gain of adding local candidate j given current coverage."""
        return float((np.maximum(best, self._cover[:, j]) - best).sum())


def evaluate(objective: FacilityObjective, subset) -> float:
    """F(S) for a set of candidate indices; 0.0 for the empty set."""
    return objective.value(subset)


def _assign_locals(objective: FacilityObjective, sel_locals: list[int]):
    """Nearest selected facility per point, ties to the lowest index."""
    order = sorted(sel_locals)
    dist = objective._dist
    assignment = {}
    gamma = {j: 0 for j in order}
    for i in range(objective.size):
        best_j = order[0]
        best_d = dist[i, best_j]
        for j in order[1:]:
            if dist[i, j] < best_d:
                best_d = dist[i, j]
                best_j = j
        assignment[i] = best_j
        gamma[best_j] += 1
    return assignment, gamma


def _to_global(objective, sel_locals, gains, assignment, gamma) -> MedoidSelection:
    g = objective.indices
    medoids = tuple(g[j] for j in sel_locals)
    value = objective.value(medoids)
    return MedoidSelection(
        medoids=medoids,
        gains=tuple(gains),
        assignment={g[i]: g[j] for i, j in assignment.items()},
        gamma={g[j]: c for j, c in gamma.items()},
        objective_value=value,
    )


def assign_and_count(objective: FacilityObjective, subset) -> MedoidSelection:
    """Assign every candidate to its nearest member of ``subset``.

    Returns a MedoidSelection whose medoids preserve the given order; the
    gains field is empty because no selection took place.
    """
    locs = objective._locals(subset)
    if not locs:
        raise InvalidInput("assignment needs a nonempty medoid set")
    if len(set(locs)) != len(locs):
        raise InvalidInput("medoid set contains duplicates")
    assignment, gamma = _assign_locals(objective, locs)
    return _to_global(objective, locs, (), assignment, gamma)


def _greedy_naive(objective: FacilityObjective, k: int) -> tuple[list[int], list[float]]:
    best = np.zeros(objective.size)
    remaining = list(range(objective.size))
    selected: list[int] = []
    gains: list[float] = []
    for _ in range(k):
        top_gain = -math.inf
        top_j = remaining[0]
        for j in remaining:  # ascending order: first strict max wins ties
            g = objective._gain(j, best)
            if g > top_gain:
                top_gain = g
                top_j = j
        selected.append(top_j)
        gains.append(top_gain)
        remaining.remove(top_j)
        best = np.maximum(best, objective._cover[:, top_j])
    return selected, gains


def _greedy_lazy(objective: FacilityObjective, k: int) -> tuple[list[int], list[float]]:
    best = np.zeros(objective.size)
    # (-gain, index): stale gains are upper bounds by submodularity
    heap = [(-objective._gain(j, best), j) for j in range(objective.size)]
    heapq.heapify(heap)
    selected: list[int] = []
    gains: list[float] = []
    while len(selected) < k:
        neg_gain, j = heapq.heappop(heap)
        fresh = (-objective._gain(j, best), j)
        # Accept only if, refreshed, it still beats every remaining bound;
        # tuple order resolves equal gains to the lowest index, matching
        # the naive scan.
        if not heap or fresh <= heap[0]:
            selected.append(j)
            gains.append(-fresh[0])
            best = np.maximum(best, objective._cover[:, j])
        else:
            heapq.heappush(heap, fresh)
    return selected, gains


def stochastic_sample_size(n: int, k: int, epsilon: float) -> int:
    """Per-step candidate sample size ceil((n/k) * ln(1/epsilon))."""
    return max(1, math.ceil((n / k) * math.log(1.0 / epsilon)))


def _greedy_stochastic(
    objective: FacilityObjective, k: int, seed: int, epsilon: float
) -> tuple[list[int], list[float]]:
    rng = Rng(seed)
    s = stochastic_sample_size(objective.size, k, epsilon)
    best = np.zeros(objective.size)
    remaining = list(range(objective.size))
    selected: list[int] = []
    gains: list[float] = []
    for _ in range(k):
        m = len(remaining)
        take = min(s, m)
        pool = sorted(remaining[p] for p in rng.sample_indices(m, take))
        top_gain = -math.inf
        top_j = pool[0]
        for j in pool:
            g = objective._gain(j, best)
            if g > top_gain:
                top_gain = g
                top_j = j
        selected.append(top_j)
        gains.append(top_gain)
        remaining.remove(top_j)
        best = np.maximum(best, objective._cover[:, top_j])
    return selected, gains


def greedy_select(
    objective: FacilityObjective,
    k: int,
    mode: str = "lazy",
    seed: int = 0,
    epsilon: float = 0.1,
) -> MedoidSelection:
    """Select min(k, n) medoids by greedy facility-location maximization.

    naive and lazy return the identical sequence; stochastic subsamples
    candidates at each step and is fully determined by ``seed``.
    """
    if k < 1:
        raise InvalidInput("k must be at least 1")
    if mode not in GREEDY_MODES:
        raise InvalidInput(f"unknown greedy mode {mode!r}")
    if not 0.0 < epsilon < 1.0:
        raise InvalidInput("epsilon must be in (0, 1)")
    k_eff = min(k, objective.size)
    if mode == "naive":
        sel, gains = _greedy_naive(objective, k_eff)
    elif mode == "lazy":
        sel, gains = _greedy_lazy(objective, k_eff)
    else:
        sel, gains = _greedy_stochastic(objective, k_eff, seed, epsilon)
    assignment, gamma = _assign_locals(objective, sel)
    return _to_global(objective, sel, gains, assignment, gamma)


def brute_force_optimum(objective: FacilityObjective, k: int) -> tuple[tuple[int, ...], float]:
    """Exact maximizer over all candidate subsets of size 1..k.

    Ties resolve to the lexicographically smallest index tuple. Guarded to
    20 candidates.
    """
    if k < 1:
        raise InvalidInput("k must be at least 1")
    n = objective.size
    if n > 20:
        raise InstanceTooLarge(f"{n} candidates exceed the brute-force guard of 20")
    best_value = -math.inf
    best_set: tuple[int, ...] | None = None
    for size in range(1, min(k, n) + 1):
        for combo in combinations(objective.indices, size):
            v = objective.value(combo)
            if v > best_value or (v == best_value and combo < best_set):
                best_value = v
                best_set = combo
    return best_set, best_value
