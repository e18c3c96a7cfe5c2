"""Desk-scale clean-label poisoning attacks against the toy models.

Two crafting objectives:

* gradient_match - maximize the cosine alignment between the mean
  parameter gradient of the poisons (with their clean labels) and the
  gradient of the adversarially labeled target, so that training on the
  poisons drags the target toward the adversarial class.
* feature_collision - pull the poisons' last-layer embeddings onto the
  target's embedding.

Crafting is projected signed-gradient ascent inside the L-infinity box of
radius epsilon: fixed step epsilon/steps, clip after every step, return
the best iterate seen. The surrogate is a single fixed model (typically a
clean converged one); victims retrain from scratch per trial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .data import DatasetState
from .errors import DegenerateTarget, InvalidInput, NoEffectiveSubset
from .models import LrSchedule, ToyModel, loss_and_grad
from .proxies import softmax
from .rng import derive_seed
from .training import BatchMode, train

ATTACK_OBJECTIVES = ("gradient_match", "feature_collision")


@dataclass(frozen=True)
class AttackSpec:
    base_indices: tuple[int, ...]
    target_features: np.ndarray
    adversarial_label: int
    epsilon: float
    steps: int = 250
    step_size: float | None = None
    objective: str = "gradient_match"

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidInput("epsilon must be >= 0")
        if self.steps < 0:
            raise InvalidInput("steps must be >= 0")
        if self.objective not in ATTACK_OBJECTIVES:
            raise InvalidInput(f"unknown attack objective {self.objective!r}")
        if len(set(self.base_indices)) != len(self.base_indices):
            raise InvalidInput("base indices must be unique")
        object.__setattr__(
            self,
            "target_features",
            np.asarray(self.target_features, dtype=np.float64),
        )


@dataclass
class AttackResult:
    """Crafted perturbations plus the optimization trace.

    ``delta`` is dense n x m with zero rows outside the poison bases.
    ``alignment_*`` are cosines between mean poison gradient and target
    gradient, always in [-1, 1].
    """

    delta: np.ndarray
    objective_trace: list[float]
    objective_value: float
    alignment_initial: float
    alignment_final: float
    success: bool | None = None


def _target_gradient(model: ToyModel, x_t: np.ndarray, y_adv: int) -> np.ndarray:
    _, g = loss_and_grad(model, x_t[None, :], np.array([y_adv]))
    return g


def _mean_poison_gradient(model, X_p, y_p) -> np.ndarray:
    _, g = loss_and_grad(model, X_p, y_p)
    return g


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _alignment_grad_linear(model, X_p, y_p, v) -> np.ndarray:
    """d cos(u(X_p), v) / d X_p for softmax regression.

    u stacks the mean weight gradient R^T X_p / P with the mean bias
    gradient; the chain rule through the softmax residual gives, per
    poison row, (J W)^T (A x + a) + A^T r with A, a the weight/bias blocks
    of d cos / d u.
    """
    W, b = model.unpack()
    C, m = W.shape
    P = X_p.shape[0]
    Z = X_p @ W.T + b
    probs = softmax(Z)
    R = probs.copy()
    R[np.arange(P), y_p] -= 1.0
    G = R.T @ X_p / P
    bbar = R.sum(axis=0) / P
    u = np.concatenate([G.ravel(), bbar])
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    dcos_du = v / (nu * nv) - (np.dot(u, v) / (nu**3 * nv)) * u
    A = dcos_du[: C * m].reshape(C, m)
    a = dcos_du[C * m :]
    out = np.empty_like(X_p)
    for i in range(P):
        p = probs[i]
        JW = p[:, None] * W - p[:, None] * (p @ W)[None, :]  # (diag(p) - p p^T) W
        out[i] = (JW.T @ (A @ X_p[i] + a) + A.T @ R[i]) / P
    return out


def _alignment_value(model, X_p, y_p, v) -> float:
    return _cosine(_mean_poison_gradient(model, X_p, y_p), v)


def _alignment_grad_fd(model, X_p, y_p, v, step=1e-6) -> np.ndarray:
    """Central finite differences; exact-architecture fallback path."""
    out = np.empty_like(X_p)
    for i in range(X_p.shape[0]):
        for g in range(X_p.shape[1]):
            plus = X_p.copy()
            plus[i, g] += step
            minus = X_p.copy()
            minus[i, g] -= step
            out[i, g] = (
                _alignment_value(model, plus, y_p, v)
                - _alignment_value(model, minus, y_p, v)
            ) / (2 * step)
    return out


def _collision_value_and_grad(model, X_p, target_emb_input):
    """Negative mean squared embedding distance to the target, and its
    gradient w.r.t. the poison features."""
    P = X_p.shape[0]
    H = model.embedding(X_p)
    diff = H - target_emb_input
    value = -float((diff * diff).sum() / P)
    if model.architecture == "linear":
        grad = -2.0 * diff / P
    else:
        W1, _, _, _ = model.unpack()
        grad = -2.0 * ((diff * (1.0 - H * H)) @ W1) / P
    return value, grad


def craft(spec: AttackSpec, surrogate: ToyModel, dataset: DatasetState) -> AttackResult:
    """Craft box-bounded perturbations for the base examples.

    The recorded trace is the raw per-step objective; the returned delta
    is the best iterate, so the final objective never falls below the
    unperturbed baseline.
    """
    bases = np.asarray(spec.base_indices, dtype=np.int64)
    if bases.size == 0:
        raise InvalidInput("attack needs at least one base example")
    if bases.min() < 0 or bases.max() >= dataset.size:
        raise InvalidInput("base index out of dataset range")
    X0 = dataset.features[bases]
    y_p = dataset.labels[bases]
    x_t = spec.target_features
    if x_t.shape != (dataset.features.shape[1],):
        raise InvalidInput("target feature dimension mismatch")

    if spec.objective == "gradient_match":
        v = _target_gradient(surrogate, x_t, spec.adversarial_label)
        if float(np.linalg.norm(v)) == 0.0:
            raise DegenerateTarget("target gradient is zero")
        value_fn = lambda Xp: _alignment_value(surrogate, Xp, y_p, v)
        if surrogate.architecture == "linear":
            grad_fn = lambda Xp: _alignment_grad_linear(surrogate, Xp, y_p, v)
        else:
            grad_fn = lambda Xp: _alignment_grad_fd(surrogate, Xp, y_p, v)
    else:
        target_emb = surrogate.embedding(x_t[None, :])[0]
        value_fn = lambda Xp: _collision_value_and_grad(surrogate, Xp, target_emb)[0]
        grad_fn = lambda Xp: _collision_value_and_grad(surrogate, Xp, target_emb)[1]

    delta = np.zeros_like(X0)
    value = value_fn(X0)
    trace = [value]
    best_value, best_delta = value, delta.copy()
    if spec.steps > 0 and spec.epsilon > 0:
        step = spec.step_size if spec.step_size is not None else spec.epsilon / spec.steps
        if step <= 0:
            raise InvalidInput("step size must be positive")
        for _ in range(spec.steps):
            g = grad_fn(X0 + delta)
            delta = np.clip(delta + step * np.sign(g), -spec.epsilon, spec.epsilon)
            value = value_fn(X0 + delta)
            trace.append(value)
            if value > best_value:
                best_value, best_delta = value, delta.copy()

    full = np.zeros_like(dataset.features)
    full[bases] = best_delta
    X_best = X0 + best_delta
    if spec.objective == "gradient_match":
        align0, align1 = trace[0], best_value
    else:
        v = _target_gradient(surrogate, x_t, spec.adversarial_label)
        align0 = _alignment_value(surrogate, X0, y_p, v)
        align1 = _alignment_value(surrogate, X_best, y_p, v)
    return AttackResult(
        delta=full,
        objective_trace=trace,
        objective_value=best_value,
        alignment_initial=align0,
        alignment_final=align1,
    )


@dataclass(frozen=True)
class VictimConfig:
    """How a from-scratch victim trains during attack evaluation."""

    architecture: str = "linear"
    hidden_width: int = 16
    schedule: LrSchedule = field(default_factory=lambda: LrSchedule(0.5))
    epochs: int = 80
    batch: BatchMode = field(default_factory=BatchMode)


def _train_victim(dataset: DatasetState, victim: VictimConfig, seed: int) -> ToyModel:
    model = ToyModel.initialize(
        victim.architecture,
        dataset.features.shape[1],
        dataset.num_classes,
        victim.hidden_width,
        seed=seed,
    )
    model, _ = train(model, dataset.clone(), victim.schedule, victim.epochs, victim.batch)
    return model


def evaluate_attack(
    dataset: DatasetState,
    delta: np.ndarray,
    victim: VictimConfig,
    target_features: np.ndarray,
    adversarial_label: int,
    trials: int = 1,
    seeds=None,
) -> float:
    """Fraction of seeded from-scratch victims classifying the target as
    the adversarial label."""
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    if seeds is None:
        seeds = [derive_seed(0xA77ACC, t) for t in range(trials)]
    elif len(seeds) != trials:
        raise InvalidInput("need one seed per trial")
    poisoned = dataset.with_features(dataset.features + delta)
    x_t = np.asarray(target_features, dtype=np.float64)
    hits = 0
    for s in seeds:
        model = _train_victim(poisoned, victim, s)
        pred = int(model.logits(x_t[None, :]).argmax(axis=1)[0])
        hits += pred == adversarial_label
    return hits / trials


def find_effective_subset(
    dataset: DatasetState,
    delta: np.ndarray,
    base_indices,
    victim: VictimConfig,
    target_features: np.ndarray,
    adversarial_label: int,
    mode: str = "exhaustive",
    trials: int = 1,
    seeds=None,
    success_threshold: float = 0.5,
) -> tuple[int, ...]:
    """Smallest poison subset that carries the attack.

    A subset qualifies when the attack succeeds with only it applied AND
    fails with only its complement applied. Exhaustive mode scans subsets
    by (size, lexicographic) order and returns the first qualifying one;
    greedy mode ablates poisons one at a time, keeping the qualifying
    pair intact. Both postconditions are re-checked on the returned set.
    """
    bases = tuple(sorted(int(i) for i in base_indices))
    if not bases:
        raise InvalidInput("empty poison set")
    if mode not in ("exhaustive", "greedy"):
        raise InvalidInput(f"unknown mode {mode!r}")
    if mode == "exhaustive" and len(bases) > 16:
        raise InvalidInput("exhaustive mode is limited to 16 poisons; use greedy")
    if seeds is None:
        seeds = [derive_seed(0xA77ACC, t) for t in range(trials)]

    def succeeds(subset) -> bool:
        sub_delta = np.zeros_like(delta)
        for i in subset:
            sub_delta[i] = delta[i]
        rate = evaluate_attack(
            dataset, sub_delta, victim, target_features, adversarial_label,
            trials=trials, seeds=seeds,
        )
        return rate >= success_threshold

    if not succeeds(bases):
        raise NoEffectiveSubset("attack fails even with every poison applied")
    if succeeds(()):
        raise NoEffectiveSubset(
            "attack succeeds with no poisons applied; effectiveness is undefined"
        )

    def qualifies(subset) -> bool:
        complement = tuple(i for i in bases if i not in set(subset))
        return succeeds(subset) and not succeeds(complement)

    if mode == "exhaustive":
        for size in range(1, len(bases) + 1):
            for combo in combinations(bases, size):
                if qualifies(combo):
                    return combo
        raise NoEffectiveSubset("no subset satisfies the effectiveness pair")

    kept = list(bases)
    changed = True
    while changed:
        changed = False
        for p in list(kept):
            candidate = tuple(i for i in kept if i != p)
            if candidate and qualifies(candidate):
                kept = list(candidate)
                changed = True
    result = tuple(kept)
    if not qualifies(result):
        raise NoEffectiveSubset("no subset satisfies the effectiveness pair")
    return result
