"""Generalization-gap, excess-risk and stopping-rule arithmetic.

Every bound decomposes into

* an initial gap ``L_ell * beta_0``: how far the i.i.d. initial sample may sit
  from the true law (concentration radius ``beta_0``),
* a reciprocal gap: how far sample adaptation may drag the sample away from
  the initial one (``L_ell * beta_T`` or its excess-risk analogue),
* a complexity term (excess-risk forms only) built from the covering entropy
  integral of the hypothesis class,
* optionally a data term (training risk, or a risk difference on the
  initial sample).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from scipy.integrate import quad

from .errors import BudgetExhaustedError, ConditionError, ConfigError

THEOREMS = (
    "gen-gap",
    "anytime-gap",
    "excess-risk",
    "anytime-excess-risk",
    "data-dependent-excess",
)

# symbol -> the regularity condition that supplies it, for error messages
_SYMBOL_SOURCE = {
    "L_s": "Lipschitz sample-adaptation condition",
    "L_ell": "Lipschitz constant of the loss in theta",
    "kappa": "smoothness condition (gradient Lipschitz constant)",
    "gamma": "strong-convexity condition",
    "L_a": "Lipschitz constant of P -> argmin R(P, theta)",
    "F_bound": "uniform bound F on the hypothesis class",
    "covering_entropy": "covering entropy integral of the hypothesis class",
}


@dataclass(frozen=True)
class BoundInputs:
    n: int
    delta: float
    d: int
    D_Z: float
    L_ell: float
    p: float = 1.0
    m: int = 1
    T: float = 0
    L_s: float | None = None
    C_a: float | None = None
    C_b: float | None = None
    kappa: float | None = None
    gamma: float | None = None
    L_a: float | None = None
    F_bound: float | None = None
    covering_entropy: float | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigError("n and m must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta={self.delta} must lie in (0, 1)")
        if not 1 <= self.p <= 2:
            raise ConfigError(f"p={self.p} must lie in [1, 2]")
        if not self.d > 2 * self.p:
            raise ConfigError(f"d={self.d} must exceed 2p={2 * self.p}")
        if self.T < 0:
            raise ConfigError("T must be nonnegative")
        if self.L_s is not None and self.L_s < 0:
            raise ConfigError("L_s must be nonnegative")

    @property
    def constants(self) -> tuple[float, float]:
        """``(C_a, C_b)``, falling back to the exemplary defaults."""
        c_a, c_b = default_constants(self.d, self.p, self.D_Z)
        return (c_a if self.C_a is None else self.C_a, c_b if self.C_b is None else self.C_b)

    def require(self, *names: str) -> None:
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            detail = "; ".join(f"{k}: {_SYMBOL_SOURCE.get(k, 'required')}" for k in missing)
            raise ConfigError(f"missing bound input(s) {', '.join(missing)} ({detail})")

    def with_(self, **changes) -> "BoundInputs":
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class BoundReport:
    theorem_id: str
    initial_gap: float
    reciprocal_gap: float
    complexity_term: float
    total: float
    confidence: float
    data_term: float | None = None

    @property
    def gap(self) -> float:
        """Total without the data term."""
        return self.initial_gap + self.reciprocal_gap + self.complexity_term

    def to_dict(self) -> dict:
        out = asdict(self)
        out["gap"] = self.gap
        return out


def _report(theorem_id, initial, reciprocal, complexity, confidence, data_term=None) -> BoundReport:
    total = initial + reciprocal + complexity + (data_term or 0.0)
    return BoundReport(theorem_id, initial, reciprocal, complexity, total, confidence, data_term)


def geometric_sum(ratio: float, T: float) -> float:
    """``sum_{t<T} ratio^t = (ratio^T - 1) / (ratio - 1)``; ``T`` at ratio 1; ``T = inf`` allowed for ratio < 1."""
    if ratio < 0:
        raise ConfigError("ratio must be nonnegative")
    if T == 0:
        return 0.0
    if math.isinf(T):
        if ratio >= 1:
            raise ConditionError(f"geometric series with ratio {ratio} diverges")
        return 1.0 / (1.0 - ratio)
    if ratio == 1:
        return float(T)
    if ratio == 0:
        return 1.0
    return math.expm1(T * math.log(ratio)) / (ratio - 1.0)


def step_cap(m: int, n: int, p: float, D_Z: float) -> float:
    """``(m/n)^(1/p) * D_Z``: largest W_p move from changing m of n atoms."""
    return (m / n) ** (1.0 / p) * D_Z


def distortion_bound(L_s: float, T: float, m: int, n: int, p: float, D_Z: float) -> float:
    """``beta_T``: cap on ``W_p(P_0, P_T)`` after T adaptation steps."""
    return geometric_sum(L_s, T) * step_cap(m, n, p, D_Z)


def distortion_limit(L_s: float, m: int, n: int, p: float, D_Z: float) -> float:
    if not 0 <= L_s < 1:
        raise ConditionError(f"beta_inf needs 0 <= L_s < 1, got L_s={L_s}")
    return step_cap(m, n, p, D_Z) / (1.0 - L_s)


def concentration_radius(n: int, delta: float, p: float, d: int, C_a: float, C_b: float) -> float:
    """Radius ``beta_0`` with ``W_p(P_0, P) <= beta_0`` w.p. at least ``1 - delta``.

    Inverts ``delta = C_a exp(-C_b n beta^(d/p))``.
    """
    if not 0 < delta < 1:
        raise ConfigError(f"delta={delta} must lie in (0, 1)")
    if C_a < delta:
        raise ConfigError(f"C_a={C_a} < delta={delta} makes log(C_a/delta) negative")
    if not d > 2 * p:
        raise ConfigError(f"d={d} must exceed 2p={2 * p}")
    if n < 1 or C_b <= 0:
        raise ConfigError("n and C_b must be positive")
    return (math.log(C_a / delta) / (C_b * n)) ** (p / d)


def default_constants(d: int, p: float, D_Z: float) -> tuple[float, float]:
    """Exemplary ``C_a = 2^(d/p)``, ``C_b = 1 / (4 D_Z^2)``."""
    return 2.0 ** (d / p), 1.0 / (4.0 * D_Z**2)


def covering_entropy_linear(d_theta: int, radius_product: float) -> float:
    """Upper bound on the L2 covering entropy integral of a bounded linear class.

    Uses ``N(eps) <= (1 + 2 D_Theta D_X / eps)^d_theta`` and integrates
    ``sqrt(log N(eps))`` over ``eps`` in (0, 1].
    """
    if d_theta < 1:
        raise ConfigError("d_theta must be >= 1")
    if radius_product < 0:
        raise ConfigError("radius_product must be nonnegative")
    if radius_product == 0:
        return 0.0
    value, _ = quad(
        lambda eps: math.sqrt(d_theta * math.log1p(2.0 * radius_product / eps)),
        0.0,
        1.0,
        epsabs=1e-10,
        epsrel=1e-10,
        limit=200,
    )
    return value


def initial_gap(inputs: BoundInputs) -> float:
    c_a, c_b = inputs.constants
    return inputs.L_ell * concentration_radius(inputs.n, inputs.delta, inputs.p, inputs.d, c_a, c_b)


def _complexity(inputs: BoundInputs) -> float:
    inputs.require("F_bound", "covering_entropy")
    return (
        inputs.F_bound
        * inputs.L_ell
        / math.sqrt(inputs.n)
        * (24.0 * inputs.covering_entropy + 2.0 * math.sqrt(2.0 * math.log(1.0 / inputs.delta)))
    )


def _contraction(inputs: BoundInputs) -> float:
    inputs.require("L_s", "kappa", "gamma", "L_a")
    if inputs.gamma <= 0:
        raise ConditionError(
            "gamma must be > 0: excess-risk bounds need the strong-convexity "
            "condition; use ridge_logistic"
        )
    return inputs.L_s * inputs.kappa / inputs.gamma


def gen_gap_bound(inputs: BoundInputs, train_risk: float | None = None) -> BoundReport:
    """Gap for the convergent learner; needs ``L_s < 1``."""
    inputs.require("L_s")
    reciprocal = inputs.L_ell * distortion_limit(inputs.L_s, inputs.m, inputs.n, inputs.p, inputs.D_Z)
    return _report("gen-gap", initial_gap(inputs), reciprocal, 0.0, 1.0 - inputs.delta, train_risk)


def anytime_gap_bound(inputs: BoundInputs, train_risk: float | None = None) -> BoundReport:
    """Gap valid simultaneously for every iteration up to ``inputs.T``."""
    inputs.require("L_s")
    beta_t = distortion_bound(inputs.L_s, inputs.T, inputs.m, inputs.n, inputs.p, inputs.D_Z)
    return _report("anytime-gap", initial_gap(inputs), inputs.L_ell * beta_t, 0.0, 1.0 - inputs.delta, train_risk)


def excess_risk_bound(inputs: BoundInputs) -> BoundReport:
    ratio = _contraction(inputs)
    if ratio >= 1:
        raise ConditionError(
            f"L_s * kappa / gamma = {ratio:.6g} >= 1; the convergent excess-risk bound "
            "needs the strong-convexity condition with gamma > L_s * kappa"
        )
    cap = step_cap(inputs.m, inputs.n, inputs.p, inputs.D_Z)
    reciprocal = inputs.L_ell * inputs.L_a * cap / (1.0 - ratio)
    return _report("excess-risk", initial_gap(inputs), reciprocal, _complexity(inputs), 1.0 - inputs.delta / 2)


def anytime_excess_risk_bound(inputs: BoundInputs) -> BoundReport:
    ratio = _contraction(inputs)
    cap = step_cap(inputs.m, inputs.n, inputs.p, inputs.D_Z)
    reciprocal = inputs.L_ell * inputs.L_a * geometric_sum(ratio, inputs.T) * cap
    return _report(
        "anytime-excess-risk", initial_gap(inputs), reciprocal, _complexity(inputs), 1.0 - inputs.delta / 2
    )


def data_dependent_excess_bound(
    inputs: BoundInputs, risk_theta_T_on_P0: float, risk_theta_0_on_P0: float
) -> BoundReport:
    """Excess risk from one extra evaluation of the current model on the initial sample."""
    data_term = risk_theta_T_on_P0 - risk_theta_0_on_P0
    return _report(
        "data-dependent-excess", initial_gap(inputs), 0.0, _complexity(inputs), 1.0 - inputs.delta / 2, data_term
    )


def stopping_time(epsilon: float, inputs: BoundInputs) -> float:
    """Largest real T whose anytime gap terms stay within ``epsilon``.

    ``math.inf`` when even the T -> infinity gap fits the budget.
    """
    inputs.require("L_s")
    if not 0 < inputs.L_s < 1:
        raise ConditionError(f"the stopping rule needs 0 < L_s < 1, got {inputs.L_s}")
    ig = initial_gap(inputs)
    if epsilon <= ig:
        raise BudgetExhaustedError(
            f"budget exhausted at T=0: epsilon={epsilon} <= initial gap {ig:.6g}"
        )
    first_step = inputs.L_ell * step_cap(inputs.m, inputs.n, inputs.p, inputs.D_Z)
    arg = 1.0 - (epsilon - ig) * (1.0 - inputs.L_s) / first_step
    if arg <= 0:
        return math.inf
    return math.log(arg) / math.log(inputs.L_s)


def stopping_rule(epsilon: float, inputs: BoundInputs) -> int | None:
    """``floor`` of :func:`stopping_time`; ``None`` means no stopping is ever needed."""
    t_star = stopping_time(epsilon, inputs)
    return None if math.isinf(t_star) else math.floor(t_star)


def evaluate(theorem_id: str, inputs: BoundInputs, **data) -> BoundReport:
    """Dispatch by theorem id (``data`` carries risks for the data-dependent forms)."""
    if theorem_id == "gen-gap":
        return gen_gap_bound(inputs, data.get("train_risk"))
    if theorem_id == "anytime-gap":
        return anytime_gap_bound(inputs, data.get("train_risk"))
    if theorem_id == "excess-risk":
        return excess_risk_bound(inputs)
    if theorem_id == "anytime-excess-risk":
        return anytime_excess_risk_bound(inputs)
    if theorem_id == "data-dependent-excess":
        try:
            return data_dependent_excess_bound(inputs, data["risk_T"], data["risk_0"])
        except KeyError as exc:
            raise ConfigError(f"data-dependent-excess needs {exc.args[0]}") from None
    raise ConfigError(f"unknown theorem {theorem_id!r}; choose from {THEOREMS}")
