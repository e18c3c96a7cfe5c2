"""Executable checks of the defense's training-dynamics guarantee.

For a loss satisfying the mu-PL* inequality 0.5 * ||grad||^2 >= mu * loss
on the visited region, constant-step gradient descent on a subset whose
gradient never strays more than rho from the full-data gradient keeps the
full-data loss under

    (1 - eta * mu)^t * L_0 - (rho^2 - 2 * rho * grad_max) / (2 * mu),

where grad_max bounds the full gradient norm along the trajectory. The
bench measures mu, rho and grad_max from instrumented runs and verifies
the inequality epoch by epoch; the contraction and additive terms are
reported separately since the additive term's sign depends on rho versus
2 * grad_max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, InvalidSurface, OutOfRegime


@dataclass(frozen=True)
class PLCertificate:
    """Largest mu certified along the inspected points."""

    mu: float
    method: str  # "analytic" | "empirical"
    points: int
    region: str


@dataclass(frozen=True)
class PLViolation:
    """A point with positive loss but too small a gradient."""

    index: int
    loss: float
    grad_norm: float


@dataclass(frozen=True)
class QuadraticBowl:
    """Separable quadratic loss 0.5 * sum_i a_i * theta_i^2.

    Satisfies the PL* inequality globally with mu = min(a); gradient
    descent contracts each coordinate by (1 - eta * a_i) per step.
    """

    coefficients: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.coefficients, dtype=np.float64))
        if a.ndim != 1 or a.size == 0 or (a <= 0).any():
            raise InvalidInput("coefficients must be positive")
        object.__setattr__(self, "coefficients", a)

    def loss(self, theta) -> float:
        t = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        return float(0.5 * (self.coefficients * t * t).sum())

    def grad(self, theta) -> np.ndarray:
        t = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        return self.coefficients * t

    def pl_constant(self) -> float:
        return float(self.coefficients.min())


def certify_pl_analytic(surface: QuadraticBowl) -> PLCertificate:
    return PLCertificate(surface.pl_constant(), "analytic", 0, "global")


def certify_pl_empirical(
    losses, grad_norms, min_loss: float = 0.0, tol: float = 1e-15
) -> PLCertificate | PLViolation:
    """min over points of 0.5 * ||g||^2 / (L - min_loss).

    Points at the assumed minimum are skipped (the inequality is vacuous
    there); a point with positive excess loss and zero gradient is a
    violation, returned instead of a certificate.
    """
    L = np.asarray(losses, dtype=np.float64)
    G = np.asarray(grad_norms, dtype=np.float64)
    if L.ndim != 1 or L.shape != G.shape or L.size == 0:
        raise InvalidInput("losses and gradient norms must be matching nonempty vectors")
    excess = L - min_loss
    if (excess < -tol).any():
        bad = int(np.nonzero(excess < -tol)[0][0])
        raise InvalidSurface(
            f"loss {L[bad]} at point {bad} is below the assumed minimum {min_loss}"
        )
    mu = np.inf
    counted = 0
    for i in range(L.size):
        if excess[i] <= tol:
            continue
        counted += 1
        ratio = 0.5 * G[i] ** 2 / excess[i]
        if ratio == 0.0:
            return PLViolation(i, float(L[i]), float(G[i]))
        mu = min(mu, ratio)
    if counted == 0:
        raise InvalidInput("every point sits at the assumed minimum; nothing to certify")
    return PLCertificate(float(mu), "empirical", counted, "visited trajectory")


@dataclass(frozen=True)
class DropPerturbation:
    """rho: max gap between full and subset gradients; grad_max: max full
    gradient norm, both over the recorded epochs."""

    rho: float
    grad_max: float


def measure_drop_perturbation(full_grads, subset_grads) -> DropPerturbation:
    if len(full_grads) != len(subset_grads):
        raise InvalidInput("gradient series lengths disagree")
    if len(full_grads) == 0:
        raise InvalidInput("gradient series are empty")
    rho = 0.0
    grad_max = 0.0
    for g, gs in zip(full_grads, subset_grads):
        g = np.asarray(g, dtype=np.float64)
        gs = np.asarray(gs, dtype=np.float64)
        if g.shape != gs.shape:
            raise InvalidInput("full and subset gradients have different shapes")
        rho = max(rho, float(np.linalg.norm(g - gs)))
        grad_max = max(grad_max, float(np.linalg.norm(g)))
    return DropPerturbation(rho, grad_max)


@dataclass(frozen=True)
class BoundCheck:
    """Per-epoch verdicts of the decay bound, with both terms exposed."""

    bounds: tuple[float, ...]
    holds: tuple[bool, ...]
    fraction_holding: float
    contraction_terms: tuple[float, ...]
    additive_term: float
    mu: float
    rho: float
    grad_max: float
    eta: float
    tolerance: float

    def to_jsonable(self) -> dict:
        return {
            "bounds": list(self.bounds),
            "holds": list(self.holds),
            "fraction_holding": self.fraction_holding,
            "contraction_terms": list(self.contraction_terms),
            "additive_term": self.additive_term,
            "mu": self.mu,
            "rho": self.rho,
            "grad_max": self.grad_max,
            "eta": self.eta,
            "tolerance": self.tolerance,
        }


def check_decay_bound(
    losses, mu: float, rho: float, grad_max: float, eta: float, tol: float = 1e-9
) -> BoundCheck:
    """Verify loss_t <= (1 - eta*mu)^t * loss_0 - (rho^2 - 2*rho*grad_max)
    / (2*mu) + tol for every t, with t indexed from the series start."""
    L = np.asarray(losses, dtype=np.float64)
    if L.ndim != 1 or L.size == 0:
        raise InvalidInput("loss series must be a nonempty vector")
    if mu <= 0:
        raise InvalidInput("mu must be positive")
    if rho < 0 or grad_max < 0:
        raise InvalidInput("rho and grad_max must be nonnegative")
    if eta <= 0:
        raise InvalidInput("eta must be positive")
    if eta * mu >= 1.0:
        raise OutOfRegime(f"eta * mu = {eta * mu} is not below 1")
    additive = -(rho**2 - 2.0 * rho * grad_max) / (2.0 * mu)
    factor = 1.0 - eta * mu
    contraction = [float(factor**t * L[0]) for t in range(L.size)]
    bounds = [c + additive for c in contraction]
    holds = [bool(L[t] <= bounds[t] + tol) for t in range(L.size)]
    return BoundCheck(
        bounds=tuple(bounds),
        holds=tuple(holds),
        fraction_holding=sum(holds) / len(holds),
        contraction_terms=tuple(contraction),
        additive_term=additive,
        mu=mu,
        rho=rho,
        grad_max=grad_max,
        eta=eta,
        tolerance=tol,
    )


def run_quadratic_gd(surface: QuadraticBowl, theta0, eta: float, steps: int):
    """Loss and gradient-norm series of plain GD on the bowl, including
    the starting point (length steps + 1)."""
    theta = np.atleast_1d(np.asarray(theta0, dtype=np.float64))
    losses = [surface.loss(theta)]
    grad_norms = [float(np.linalg.norm(surface.grad(theta)))]
    for _ in range(steps):
        theta = theta - eta * surface.grad(theta)
        losses.append(surface.loss(theta))
        grad_norms.append(float(np.linalg.norm(surface.grad(theta))))
    return losses, grad_norms
