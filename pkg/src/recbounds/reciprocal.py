"""Self-training as reciprocal learning: ERM alternating with sample adaptation.

Each adaptation step scores the unlabeled pool by confidence
``|sigmoid(<theta, x>) - 1/2|``, draws ``m`` points from a softmax over the
scores (the temperature regularizes selection; 0 means deterministic top-m),
labels them softly with ``sigmoid(<theta, x>)`` and either appends them
(greedy) or swaps them for ``m`` current points (non-greedy).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import EmpiricalDistribution, Instance, make_empirical
from .errors import ConfigError
from .learner import LossSpec, Model, erm, risk
from .transport import wasserstein

MODES = ("greedy_add", "nongreedy_replace")
REPLACE_POLICIES = ("oldest_pseudo", "random_seeded")


@dataclass(frozen=True)
class AdaptationConfig:
    mode: str = "greedy_add"
    m: int = 1
    selection_temperature: float = 0.05
    replace_policy: str = "oldest_pseudo"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.replace_policy not in REPLACE_POLICIES:
            raise ConfigError(f"replace_policy must be one of {REPLACE_POLICIES}")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"m must be a positive integer, got {self.m!r}")
        if self.selection_temperature < 0:
            raise ConfigError("selection_temperature must be >= 0")

    @property
    def greedy(self) -> bool:
        return self.mode == "greedy_add"


@dataclass(frozen=True)
class IterationRecord:
    t: int
    theta: Model
    sample: EmpiricalDistribution
    step_wasserstein: float | None
    train_risk: float

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "theta": [float(v) for v in self.theta.theta],
            "n": len(self.sample),
            "step_wasserstein": self.step_wasserstein,
            "train_risk": self.train_risk,
            "erm_converged": self.theta.converged,
            "erm_iterations": self.theta.n_iter,
        }


@dataclass
class ReciprocalPath:
    iterations: list[IterationRecord]
    pool_remaining: list[Instance]
    adaptation: AdaptationConfig
    requested_T: int
    status: str = "completed"

    @property
    def horizon(self) -> int:
        return self.iterations[-1].t

    @property
    def n0(self) -> int:
        return len(self.iterations[0].sample)

    @property
    def step_distances(self) -> list[float]:
        """``W_p(P_{t-1}, P_t)`` for t = 1..horizon."""
        return [rec.step_wasserstein for rec in self.iterations[1:]]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec.to_dict(), sort_keys=True) + "\n" for rec in self.iterations)


def pseudo_label(theta, x: Sequence[float]) -> float:
    th = theta.theta if isinstance(theta, Model) else np.asarray(theta, dtype=float)
    return float(expit(th @ np.asarray(x, dtype=float)))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def select_candidates(
    theta,
    pool: Sequence[Instance],
    m: int,
    temperature: float,
    seed: int | np.random.Generator = 0,
) -> list[int]:
    """Pick ``m`` pool indices, favouring confident predictions.

    Sampling without replacement from ``softmax(confidence / temperature)``
    is done with the Gumbel-top-k trick, which stays exact for tiny
    temperatures.  ``temperature == 0`` gives the deterministic top-m with
    ties broken by lower index.
    """
    if m > len(pool):
        raise ConfigError(f"cannot select {m} points from a pool of {len(pool)}")
    th = theta.theta if isinstance(theta, Model) else np.asarray(theta, dtype=float)
    X = np.array([inst.x for inst in pool], dtype=float).reshape(len(pool), -1)
    conf = np.abs(expit(X @ th) - 0.5)
    if temperature == 0:
        keys = conf
    else:
        keys = conf / temperature + _rng(seed).gumbel(size=len(pool))
    order = np.argsort(-keys, kind="stable")
    return [int(i) for i in order[:m]]


def _replace_indices(P: EmpiricalDistribution, m: int, policy: str, rng) -> list[int]:
    if policy == "random_seeded":
        return sorted(int(i) for i in rng.choice(len(P), size=m, replace=False))
    pseudo = [i for i, inst in enumerate(P.points) if inst.pseudo]
    if len(pseudo) >= m:
        return pseudo[:m]
    # not enough pseudo-labeled points yet: fall back to the oldest labeled ones
    labeled = [i for i, inst in enumerate(P.points) if not inst.pseudo]
    return pseudo + labeled[: m - len(pseudo)]


def adapt_sample(
    theta,
    P: EmpiricalDistribution,
    pool: Sequence[Instance],
    config: AdaptationConfig,
    step: int = 0,
) -> tuple[EmpiricalDistribution, list[Instance]]:
    """One sample adaptation step; returns the new sample and the shrunk pool.

    ``step`` is mixed into the seed so that successive steps draw fresh
    randomness while the whole run stays a function of ``config.seed``.
    """
    if not pool:
        raise ConfigError("the unlabeled pool is empty")
    m = config.m
    if not config.greedy and len(P) < m:
        raise ConfigError(f"cannot replace {m} points in a sample of {len(P)}")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, step]))
    chosen = select_candidates(theta, pool, m, config.selection_temperature, rng)
    new_points = [Instance(pseudo_label(theta, pool[i].x), pool[i].x, pseudo=True) for i in chosen]
    taken = set(chosen)
    remaining = [inst for i, inst in enumerate(pool) if i not in taken]

    if config.greedy:
        kept = list(P.points)
    else:
        drop = set(_replace_indices(P, m, config.replace_policy, rng))
        kept = [inst for i, inst in enumerate(P.points) if i not in drop]
    return make_empirical(kept + new_points), remaining


def run_reciprocal(
    labeled: Sequence[Instance],
    pool: Sequence[Instance],
    T: int,
    loss: LossSpec,
    adapt: AdaptationConfig,
    tol: float = 1e-8,
    max_iter: int = 50_000,
) -> ReciprocalPath:
    if T < 0:
        raise ConfigError("T must be nonnegative")
    space = loss.space
    space.check(labeled)
    for inst in pool:
        if len(inst.x) != space.d_x:
            raise ConfigError(f"pool instance {inst} has the wrong dimension")

    P = make_empirical(labeled)
    theta = erm(P, loss, tol, max_iter)
    records = [IterationRecord(0, theta, P, None, risk(P, theta, loss))]
    pool = list(pool)
    status = "completed"
    for t in range(1, T + 1):
        if len(pool) < adapt.m:
            status = "pool_exhausted"
            break
        P_next, pool = adapt_sample(theta, P, pool, adapt, step=t)
        step_w = wasserstein(P, P_next, space)[0]
        theta = erm(P_next, loss, tol, max_iter)
        P = P_next
        records.append(IterationRecord(t, theta, P, step_w, risk(P, theta, loss)))
    return ReciprocalPath(records, pool, adapt, T, status)


def contraction_ratio(steps: Sequence[float]) -> float:
    """Largest ``steps[k] / steps[k-1]`` over consecutive steps with a positive denominator."""
    ratios = [steps[k] / steps[k - 1] for k in range(1, len(steps)) if steps[k - 1] > 0]
    if len(ratios) < 2:
        raise ConfigError(f"need at least 2 usable step ratios, found {len(ratios)}")
    return max(ratios)


def estimate_ls(path: ReciprocalPath) -> float:
    """Empirical witness of the pathwise Lipschitz constant of the adaptation.

    Ratios of consecutive step distances, ``W(P_t, P_{t-1}) / W(P_{t-1}, P_{t-2})``;
    only a lower witness of the true constant.
    """
    return contraction_ratio(path.step_distances)


def detect_convergence(path: ReciprocalPath, tol: float) -> int | None:
    """First t with both the parameter move and the sample move at most ``tol``."""
    if tol <= 0:
        raise ConfigError("tol must be positive")
    its = path.iterations
    for prev, cur in zip(its, its[1:]):
        if (
            np.linalg.norm(cur.theta.theta - prev.theta.theta) <= tol
            and cur.step_wasserstein is not None
            and cur.step_wasserstein <= tol
        ):
            return cur.t
    return None
