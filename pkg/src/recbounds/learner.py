"""Logistic loss on soft labels, its constants, and a deterministic ERM solver.

A soft label ``q`` in [0, 1] is read as the class mixture
``q * l(+1, x, theta) + (1 - q) * l(-1, x, theta)`` with
``l(s, x, theta) = log(1 + exp(-s <theta, x>))``.  Its gradient collapses to
``(sigmoid(<theta, x>) - q) * x``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import EmpiricalDistribution, Instance, SpaceSpec, diameters_x_theta
from .errors import ConfigError, NumericalError
from .transport import wasserstein

log = logging.getLogger(__name__)

LOSS_KINDS = ("logistic", "ridge_logistic")

_ARMIJO = 1e-4
_STEP_MIN, _STEP_MAX = 1e-12, 1e300


@dataclass(frozen=True)
class LossSpec:
    space: SpaceSpec
    kind: str = "logistic"
    ridge_lambda: float = 0.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda must be nonnegative")
        if self.kind == "ridge_logistic" and self.ridge_lambda <= 0:
            raise ConfigError("ridge_logistic requires ridge_lambda > 0")
        if self.kind == "logistic" and self.ridge_lambda != 0:
            raise ConfigError("plain logistic loss takes ridge_lambda = 0")

    @property
    def lam(self) -> float:
        return self.ridge_lambda if self.kind == "ridge_logistic" else 0.0


@dataclass(frozen=True)
class LossConstants:
    L_ell: float
    kappa: float
    gamma: float
    F_bound: float


@dataclass(frozen=True)
class Model:
    """Parameter vector plus solver diagnostics (ignored by equality)."""

    theta: np.ndarray
    converged: bool = field(default=True, compare=False)
    n_iter: int = field(default=0, compare=False)
    pg_norm: float = field(default=0.0, compare=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def __eq__(self, other):
        if not isinstance(other, Model):
            return NotImplemented
        return np.array_equal(self.theta, other.theta)

    __hash__ = None


def _theta_array(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, Model) else np.asarray(theta, dtype=float)


def _mixture_loss(q, margin):
    # log(1 + e^{-s}) = logaddexp(0, -s)
    return q * np.logaddexp(0.0, -margin) + (1.0 - q) * np.logaddexp(0.0, margin)


def loss(y: float, x: Sequence[float], theta, spec: LossSpec) -> float:
    th = _theta_array(theta)
    x = np.asarray(x, dtype=float)
    value = float(_mixture_loss(float(y), float(th @ x)))
    if spec.lam:
        value += 0.5 * spec.lam * float(th @ th)
    return value


def loss_gradient(y: float, x: Sequence[float], theta, spec: LossSpec) -> np.ndarray:
    th = _theta_array(theta)
    x = np.asarray(x, dtype=float)
    grad = _residual(float(y), float(th @ x)) * x
    if spec.lam:
        grad = grad + spec.lam * th
    return grad


def loss_lipschitz_constant(space: SpaceSpec, theta_convention: str = "box_diameter") -> float:
    """``D_X / (1 + exp(-D_X D_Theta))``, the sup of the logistic gradient norm."""
    d_x, d_theta = diameters_x_theta(space, theta_convention)
    return d_x / (1.0 + math.exp(-d_x * d_theta))


def loss_constants(spec: LossSpec, theta_convention: str = "box_diameter") -> LossConstants:
    """Analytic constants of the (ridge) logistic loss over the declared boxes.

    The Hessian of the logistic part is ``sigmoid' * x x^T <= D_X^2 / 4``,
    the ridge term adds ``lam`` to both curvature bounds and
    ``lam * D_Theta`` to the gradient bound.  Predictions are probabilities,
    so ``F = 1``.
    """
    d_x, d_theta = diameters_x_theta(spec.space, theta_convention)
    lam = spec.lam
    return LossConstants(
        L_ell=loss_lipschitz_constant(spec.space, theta_convention) + lam * d_theta,
        kappa=0.25 * d_x**2 + lam,
        gamma=lam,
        F_bound=1.0,
    )


def _residual(q, margin):
    # sigmoid(s) - q without cancellation when sigmoid(s) rounds to 1
    return (1.0 - q) * expit(margin) - q * expit(-margin)


def _risk_and_grad(theta, y, X, w, lam):
    margin = X @ theta
    value = float(w @ _mixture_loss(y, margin))
    grad = X.T @ (w * _residual(y, margin))
    if lam:
        value += 0.5 * lam * float(theta @ theta)
        grad = grad + lam * theta
    return value, grad


def risk(P: EmpiricalDistribution, theta, spec: LossSpec) -> float:
    th = _theta_array(theta)
    return _risk_and_grad(th, P.labels, P.features, P.weights, spec.lam)[0]


def risk_gradient(P: EmpiricalDistribution, theta, spec: LossSpec) -> np.ndarray:
    th = _theta_array(theta)
    return _risk_and_grad(th, P.labels, P.features, P.weights, spec.lam)[1]


def erm(
    P: EmpiricalDistribution,
    spec: LossSpec,
    tol: float = 1e-8,
    max_iter: int = 50_000,
) -> Model:
    """Minimize the empirical risk over the parameter box.

    Projected gradient descent from ``theta = 0`` (clipped into the box) with
    Barzilai-Borwein trial steps and Armijo backtracking along the projected
    path.  Stops once ``||theta - proj(theta - grad)|| <= tol`` and the same
    residual at the current trial step is also below ``tol``; the second test
    keeps flat logistic tails moving towards the box boundary.  Hitting
    ``max_iter`` is reported through ``Model.converged`` rather than raised.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    lo = np.array([a for a, _ in spec.space.theta_box])
    hi = np.array([b for _, b in spec.space.theta_box])
    y, X, w, lam = P.labels, P.features, P.weights, spec.lam
    if X.shape[1] != lo.size:
        raise ConfigError(f"features of dimension {X.shape[1]} for a {lo.size}-dim parameter box")

    theta = np.clip(np.zeros(lo.size), lo, hi)
    f, g = _risk_and_grad(theta, y, X, w, lam)
    step = 1.0
    pg_norm = math.inf
    for it in range(max_iter):
        pg_norm = float(np.linalg.norm(theta - np.clip(theta - g, lo, hi)))
        if pg_norm <= tol and np.linalg.norm(theta - np.clip(theta - step * g, lo, hi)) <= tol:
            return Model(theta, converged=True, n_iter=it, pg_norm=pg_norm)
        slack = 8 * np.finfo(float).eps * max(1.0, abs(f))
        s = step
        while True:
            cand = np.clip(theta - s * g, lo, hi)
            fc, gc = _risk_and_grad(cand, y, X, w, lam)
            if fc <= f + _ARMIJO * (g @ (cand - theta)) + slack:
                break
            s *= 0.5
            if s < 1e-300:
                raise NumericalError(f"line search stalled at iteration {it}")
        sk, yk = cand - theta, gc - g
        sy = float(sk @ yk)
        step = min(max(float(sk @ sk) / sy, _STEP_MIN), _STEP_MAX) if sy > 0 else _STEP_MAX
        theta, f, g = cand, fc, gc
    log.warning("ERM stopped at max_iter=%d with projected-gradient norm %.3g", max_iter, pg_norm)
    return Model(theta, converged=False, n_iter=max_iter, pg_norm=pg_norm)


def estimate_la(
    P: EmpiricalDistribution,
    spec: LossSpec,
    n_perturb: int = 20,
    scale: float = 0.05,
    seed: int = 0,
    tol: float = 1e-10,
) -> float:
    """Empirical Lipschitz ratio ``||erm(P) - erm(Q)|| / W_1(P, Q)`` over random Q.

    Each Q moves the features of P by uniform noise of size ``scale``
    (clipped to the box).  Returns the largest observed ratio; this is only a
    lower witness of the true constant.
    """
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in spec.space.feature_box])
    hi = np.array([b for _, b in spec.space.feature_box])
    base = erm(P, spec, tol=tol).theta
    ratios = []
    for _ in range(n_perturb):
        feats = np.clip(P.features + rng.uniform(-scale, scale, P.features.shape), lo, hi)
        Q = EmpiricalDistribution(tuple(Instance(y, x) for y, x in zip(P.labels, feats)), P.weights)
        w1 = wasserstein(P, Q, p=1.0)[0]
        if w1 > 0:
            ratios.append(float(np.linalg.norm(erm(Q, spec, tol=tol).theta - base)) / w1)
    if not ratios:
        raise ConfigError("no perturbation moved the distribution")
    return max(ratios)
