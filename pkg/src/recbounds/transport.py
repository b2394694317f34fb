"""Exact Wasserstein-p distances between finitely supported distributions.

The transportation LP is solved by the network simplex in POT (``ot.emd``).
Equal-size uniform inputs may instead go through the assignment problem,
whose optimum is a vertex of the same polytope.  ``wasserstein_bruteforce``
enumerates permutations and shares no code with either solver.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import EmpiricalDistribution, SpaceSpec
from .errors import ConfigError, NumericalError

# POT probes every installed array backend on import; only numpy is needed.
for _backend in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

MARGINAL_TOL = 1e-9
BRUTEFORCE_MAX_N = 8


@dataclass(frozen=True)
class Coupling:
    mass: np.ndarray
    cost: float

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["i", "j", "mass"])
            for i, j in zip(*np.nonzero(self.mass)):
                writer.writerow([int(i), int(j), repr(float(self.mass[i, j]))])


def cost_matrix(P: EmpiricalDistribution, Q: EmpiricalDistribution, p: float) -> np.ndarray:
    """Dense matrix of ``d_Z(z_i, z'_j) ** p``."""
    if P.array.shape[1] != Q.array.shape[1]:
        raise ConfigError(f"space mismatch: dimension {P.array.shape[1]} vs {Q.array.shape[1]}")
    diff = P.array[:, None, :] - Q.array[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return dist if p == 1 else dist**p


def _check_space(P, Q, space):
    if space is not None:
        for dist in (P, Q):
            if dist.array.shape[1] != space.d:
                raise ConfigError(f"distribution of dimension {dist.array.shape[1]} used with d={space.d}")


def wasserstein(
    P: EmpiricalDistribution,
    Q: EmpiricalDistribution,
    space: SpaceSpec | None = None,
    *,
    p: float | None = None,
    method: str = "auto",
) -> tuple[float, Coupling]:
    """Exact ``W_p(P, Q)`` and an optimal coupling.

    ``p`` defaults to ``space.p``.  ``method`` is ``"lp"`` (network simplex),
    ``"assignment"`` (equal-size uniform inputs only) or ``"auto"``.
    """
    _check_space(P, Q, space)
    if p is None:
        if space is None:
            raise ConfigError("either a space or an explicit order p is required")
        p = space.p
    M = cost_matrix(P, Q, p)
    same_uniform = len(P) == len(Q) and P.is_uniform and Q.is_uniform
    if method == "auto":
        method = "assignment" if same_uniform else "lp"

    if method == "assignment":
        if not same_uniform:
            raise ConfigError("assignment path needs equal-size uniform distributions")
        rows, cols = linear_sum_assignment(M)
        mass = np.zeros_like(M)
        mass[rows, cols] = P.weights[rows]
    elif method == "lp":
        a = np.ascontiguousarray(P.weights, dtype=np.float64)
        b = np.ascontiguousarray(Q.weights, dtype=np.float64)
        mass, log = ot.emd(a, b, np.ascontiguousarray(M), numItermax=10_000_000, log=True)
        if log.get("result_code", 1) != 1:
            raise NumericalError(f"network simplex failed: {log.get('warning')}")
    else:
        raise ConfigError(f"unknown method {method!r}")

    if (
        np.abs(mass.sum(axis=1) - P.weights).max() > MARGINAL_TOL
        or np.abs(mass.sum(axis=0) - Q.weights).max() > MARGINAL_TOL
    ):
        raise NumericalError("optimal coupling violates its marginals")
    cost = float(np.sum(mass * M))
    return max(cost, 0.0) ** (1.0 / p), Coupling(mass, cost)


def wasserstein_distance(P, Q, space=None, **kw) -> float:
    return wasserstein(P, Q, space, **kw)[0]


def wasserstein_bruteforce(
    P: EmpiricalDistribution,
    Q: EmpiricalDistribution,
    space: SpaceSpec | None = None,
    *,
    p: float | None = None,
) -> float:
    """Exhaustive minimum over all ``n!`` matchings (uniform, equal size, n <= 8).

    For uniform marginals of equal size the transport polytope's vertices are
    permutation matrices (Birkhoff), so the minimum over permutations is W_p.
    """
    n = len(P)
    if len(Q) != n or not (P.is_uniform and Q.is_uniform):
        raise ConfigError("brute force needs two uniform distributions of equal size")
    if n > BRUTEFORCE_MAX_N:
        raise ConfigError(f"brute force limited to n <= {BRUTEFORCE_MAX_N}, got {n}")
    if p is None:
        if space is None:
            raise ConfigError("either a space or an explicit order p is required")
        p = space.p
    zp = [inst.as_array() for inst in P.points]
    zq = [inst.as_array() for inst in Q.points]
    cost = [[math.dist(a, b) ** p for b in zq] for a in zp]
    best = min(math.fsum(cost[i][j] for i, j in enumerate(perm)) for perm in itertools.permutations(range(n)))
    return (best / n) ** (1.0 / p)
