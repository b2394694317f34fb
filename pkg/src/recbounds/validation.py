"""Monte Carlo and replication suites behind ``rec-bounds validate``.

Each suite returns a :class:`ValidationReport`.  Trials are independent,
seeded from ``(master_seed, trial_index)``, run in a process pool capped by
``REC_BOUNDS_THREADS`` and merged back in trial order, so the report does not
depend on the worker count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bounds import (
    BoundInputs,
    anytime_gap_bound,
    concentration_radius,
    default_constants,
    distortion_bound,
    geometric_sum,
    step_cap,
    stopping_time,
)
from .core import Instance, SpaceSpec, diameter_z, make_empirical
from .errors import BudgetExhaustedError, ConfigError
from .harness import json_safe
from .learner import LossSpec
from .reciprocal import AdaptationConfig, contraction_ratio, run_reciprocal
from .synthetic import logistic_sample, random_atomic_law
from .transport import wasserstein, wasserstein_bruteforce

SUITES = ("distortion", "concentration", "oracle_ot", "paper_replication")
DEFAULT_TRIALS = {"distortion": 100, "concentration": 1000, "oracle_ot": 200, "paper_replication": 1}

WASSERSTEIN_TOL = 1e-9


@dataclass
class ValidationReport:
    suite: str
    trials: int
    violations: int
    worst_slack: float
    details_path: str | None = None
    passed: bool = True
    summary: dict = field(default_factory=dict)
    worst: dict | None = None

    def __post_init__(self):
        if not 0 <= self.violations <= self.trials:
            raise ValueError("violations must lie in [0, trials]")

    def to_dict(self) -> dict:
        return asdict(self)


def worker_count() -> int:
    cap = os.environ.get("REC_BOUNDS_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"REC_BOUNDS_THREADS must be an integer, got {cap!r}") from None
    return n


def parallel_map(fn: Callable, args: Sequence, workers: int | None = None) -> list:
    """``[fn(a) for a in args]``, in a process pool when more than one worker is allowed."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    chunk = max(1, len(args) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args, chunksize=chunk))


def _trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


# ---------------------------------------------------------------- distortion

_DISTORTION_SCHEDULE = (("greedy_add", 1), ("nongreedy_replace", 1), ("nongreedy_replace", 2))
_DISTORTION_P = (1.0, 1.25)


def distortion_trial(args: tuple[int, int]) -> dict:
    """One self-training path checked against the per-step cap, the triangle
    inequality and the geometric distortion bound at every recorded T."""
    seed, index = args
    rng = _trial_rng(seed, index)
    mode, m = _DISTORTION_SCHEDULE[index % len(_DISTORTION_SCHEDULE)]
    p = _DISTORTION_P[(index // len(_DISTORTION_SCHEDULE)) % len(_DISTORTION_P)]
    space = SpaceSpec(feature_box=((0.0, 1.0), (0.0, 1.0)), theta_box=((-5.0, 5.0), (-5.0, 5.0)), p=p)
    T = 20
    n0 = int(rng.integers(10, 41))
    labeled = logistic_sample(space, n0, rng)
    pool = [Instance(0.5, inst.x) for inst in logistic_sample(space, T * m + 10, rng)]
    loss = LossSpec(space, "ridge_logistic", 0.1)
    adapt = AdaptationConfig(mode=mode, m=m, selection_temperature=0.05, seed=int(rng.integers(2**31)))
    path = run_reciprocal(labeled, pool, T, loss, adapt)

    D_Z = diameter_z(space)
    steps = path.step_distances
    try:
        ls = contraction_ratio(steps)
    except ConfigError:
        ls = 0.0
    if mode == "greedy_add" and m == 1:
        ls = max(ls, (n0 - 1) / n0)

    P0 = path.iterations[0].sample
    worst = math.inf
    violations = []
    running = 0.0
    for k, rec in enumerate(path.iterations[1:], start=1):
        n_prev = len(path.iterations[k - 1].sample)
        cap = step_cap(m, n_prev, p, D_Z)
        running += steps[k - 1]
        w0t = wasserstein(P0, rec.sample, space)[0]
        beta = distortion_bound(ls, k, m, n0, p, D_Z)
        plug_in = geometric_sum(ls, k) * steps[0]
        # slack against the tolerance-adjusted bound: negative means violation
        checks = {
            "step_cap": cap - steps[k - 1],
            "triangle": running - w0t,
            "beta_T": beta - w0t,
            "plug_in": plug_in - w0t,
        }
        for name, raw in checks.items():
            slack = raw + WASSERSTEIN_TOL
            worst = min(worst, slack)
            if slack < 0:
                violations.append({"check": name, "t": k, "slack": slack})
    return {
        "trial": index,
        "mode": mode,
        "m": m,
        "p": p,
        "n0": n0,
        "T": path.horizon,
        "L_s": ls,
        "worst_slack": worst,
        "violations": violations,
    }


# ------------------------------------------------------------- concentration

CONCENTRATION_NS = (50, 200)
CONCENTRATION_DELTAS = (0.05, 0.1)
CONCENTRATION_ATOMS = 8
_LAW_STREAM = 2**32 - 1


def _concentration_space() -> SpaceSpec:
    return SpaceSpec(feature_box=((0.0, 1.0), (0.0, 1.0)), theta_box=((-5.0, 5.0), (-5.0, 5.0)), p=1.0)


def concentration_trial(args: tuple[int, int]) -> dict:
    """Exact ``W_p(P_0, P)`` against ``beta_0`` for every (n, delta) cell."""
    seed, index = args
    space = _concentration_space()
    # one fixed ground truth per master seed, shared by all trials
    law = random_atomic_law(space, CONCENTRATION_ATOMS, _trial_rng(seed, _LAW_STREAM))
    truth = law.as_distribution()
    rng = _trial_rng(seed, index)
    c_a, c_b = default_constants(space.d, space.p, diameter_z(space))
    cells = []
    for n in CONCENTRATION_NS:
        w = wasserstein(law.empirical(n, rng), truth, space, method="lp")[0]
        for delta in CONCENTRATION_DELTAS:
            radius = concentration_radius(n, delta, space.p, space.d, c_a, c_b)
            cells.append({"n": n, "delta": delta, "w": w, "radius": radius, "covered": w <= radius})
    return {"trial": index, "cells": cells}


# ----------------------------------------------------------------- oracle_ot


def oracle_ot_trial(args: tuple[int, int]) -> dict:
    """Network simplex against the permutation brute force on a random pair."""
    seed, index = args
    rng = _trial_rng(seed, index)
    n = int(rng.integers(2, 7))
    p = float(rng.choice([1.0, 2.0]))
    d_x = 4

    def cloud():
        z = rng.uniform(size=(n, d_x + 1))
        return make_empirical([Instance(row[0], row[1:]) for row in z])

    P, Q = cloud(), cloud()
    lp = wasserstein(P, Q, p=p, method="lp")[0]
    brute = wasserstein_bruteforce(P, Q, p=p)
    err = abs(lp - brute)
    return {"trial": index, "n": n, "p": p, "lp": lp, "brute": brute, "abs_error": err}


# --------------------------------------------------------- paper_replication

# worked example: n = 10^4 labeled points in [0,1]^3, greedy single-point
# self-training, T = 100, delta = 0.05
EXAMPLE_INPUTS = dict(
    n=10_000,
    delta=0.05,
    d=3,
    p=1.0,
    m=1,
    T=100,
    D_Z=math.sqrt(3.0),
    L_ell=math.sqrt(2.0),
    L_s=9999 / 10_000,
    C_a=8.0,
    C_b=1.0 / 12.0,
)
EXAMPLE_TARGETS = {
    "initial_gap": (0.1627, 5e-4),
    "reciprocal_gap": (0.0244, 5e-4),
    "total_gap": (0.1871, 1e-3),
    "stopping_time": (153.46, 0.15),
}
EXAMPLE_EPSILON = 0.2
EXAMPLE_STOP_FLOOR = 153
# The example's printed arithmetic uses (3 log(8/delta) / n)^(1/3), which is
# C_b = 1/D_Z^2 = 1/3 rather than the stated exemplary 1/(4 D_Z^2) = 1/12.
PRINTED_ARITHMETIC_C_B = 1.0 / 3.0


def worked_example_values(C_b: float | None = None) -> dict:
    inputs = BoundInputs(**EXAMPLE_INPUTS)
    if C_b is not None:
        inputs = inputs.with_(C_b=C_b)
    rep = anytime_gap_bound(inputs)
    try:
        t_star = stopping_time(EXAMPLE_EPSILON, inputs)
    except BudgetExhaustedError:
        t_star = math.nan
    return {
        "initial_gap": rep.initial_gap,
        "reciprocal_gap": rep.reciprocal_gap,
        "total_gap": rep.gap,
        "stopping_time": t_star,
    }


def worked_example_checks(C_b: float | None = None) -> list[dict]:
    """The four worked-example targets plus the floor of the stopping time.

    A NaN stopping time (budget already spent at T = 0) fails both its checks.
    """
    values = worked_example_values(C_b)
    out = []
    for name, (target, tol) in EXAMPLE_TARGETS.items():
        err = abs(values[name] - target)
        slack = tol - err if math.isfinite(err) else -math.inf
        out.append({"check": name, "value": values[name], "target": target, "tol": tol, "slack": slack})
    t_star = values["stopping_time"]
    floor = math.floor(t_star) if math.isfinite(t_star) else None
    out.append(
        {
            "check": "stopping_floor",
            "value": floor,
            "target": EXAMPLE_STOP_FLOOR,
            "tol": 0,
            "slack": 0.0 if floor == EXAMPLE_STOP_FLOOR else -1.0,
        }
    )
    return out


# -------------------------------------------------------------------- runner


def _write_details(out_dir: Path | None, suite: str, details) -> str | None:
    if out_dir is None:
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"validate_{suite}.json"
    path.write_text(json.dumps(json_safe(details), sort_keys=True, indent=1, allow_nan=False) + "\n")
    return str(path)


def run_suite(
    suite: str,
    trials: int | None = None,
    seed: int = 0,
    out_dir: Path | None = None,
    workers: int | None = None,
) -> ValidationReport:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")
    trials = DEFAULT_TRIALS[suite] if trials is None else int(trials)
    if trials < 1:
        raise ConfigError("trials must be positive")
    args = [(seed, i) for i in range(trials)]

    if suite == "paper_replication":
        checks = worked_example_checks()
        bad = [c for c in checks if c["slack"] < 0]
        reference = worked_example_values(PRINTED_ARITHMETIC_C_B)
        return ValidationReport(
            suite,
            len(checks),
            len(bad),
            min(c["slack"] for c in checks),
            _write_details(out_dir, suite, {"checks": checks, "printed_arithmetic": reference}),
            passed=not bad,
            summary={
                "stated_constants": {c["check"]: c["value"] for c in checks},
                "printed_arithmetic_C_b_1_3": reference,
            },
            worst=min(checks, key=lambda c: c["slack"]),
        )

    if suite == "oracle_ot":
        results = parallel_map(oracle_ot_trial, args, workers)
        slacks = [WASSERSTEIN_TOL - r["abs_error"] for r in results]
        bad = [r for r, s in zip(results, slacks) if s < 0]
        worst = results[int(np.argmin(slacks))]
        return ValidationReport(
            suite,
            trials,
            len(bad),
            min(slacks),
            _write_details(out_dir, suite, results),
            passed=not bad,
            summary={"max_abs_error": max(r["abs_error"] for r in results)},
            worst=worst,
        )

    if suite == "distortion":
        results = parallel_map(distortion_trial, args, workers)
        bad = [r for r in results if r["violations"]]
        worst = min(results, key=lambda r: r["worst_slack"])
        return ValidationReport(
            suite,
            trials,
            len(bad),
            worst["worst_slack"],
            _write_details(out_dir, suite, results),
            passed=not bad,
            summary={"checks_per_step": ["step_cap", "triangle", "beta_T", "plug_in"]},
            worst=worst,
        )

    # concentration: only the coverage direction is asserted per (n, delta) cell
    results = parallel_map(concentration_trial, args, workers)
    cells = {}
    for r in results:
        for c in r["cells"]:
            cell = cells.setdefault((c["n"], c["delta"]), {"covered": 0, "slack": math.inf})
            cell["covered"] += c["covered"]
            cell["slack"] = min(cell["slack"], c["radius"] - c["w"])
    summary = {}
    violations = 0
    for (n, delta), cell in sorted(cells.items()):
        coverage = cell["covered"] / trials
        ok = coverage >= 1 - delta
        violations = max(violations, trials - cell["covered"])
        summary[f"n={n},delta={delta}"] = {"coverage": coverage, "required": 1 - delta, "ok": ok}
    passed = all(v["ok"] for v in summary.values())
    worst_key = min(summary, key=lambda k: summary[k]["coverage"] - summary[k]["required"])
    return ValidationReport(
        suite,
        trials,
        violations,
        min(c["slack"] for c in cells.values()),
        _write_details(out_dir, suite, results),
        passed=passed,
        summary=summary,
        worst={"cell": worst_key, **summary[worst_key]},
    )
