"""Seeded synthetic ground truths.

Two generators: a finite mixture of weighted atoms (so that the distance of
an empirical sample to the truth is exactly computable) and a continuous
logistic model with uniform features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import EmpiricalDistribution, Instance, SpaceSpec
from .errors import ConfigError


@dataclass(frozen=True)
class AtomicLaw:
    """Discrete law on Z: atoms with probabilities."""

    atoms: tuple[Instance, ...]
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if len(self.atoms) != probs.size or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-12):
            raise ConfigError("atom probabilities must be nonnegative, one per atom, summing to 1")
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "probs", probs / probs.sum())

    @classmethod
    def from_dicts(cls, rows: Sequence[dict]) -> "AtomicLaw":
        atoms = tuple(Instance(r["y"], r["x"]) for r in rows)
        weights = np.array([float(r.get("weight", 1.0)) for r in rows])
        if weights.sum() <= 0:
            raise ConfigError("true_distribution weights must have positive total")
        return cls(atoms, weights / weights.sum())

    def as_distribution(self) -> EmpiricalDistribution:
        return EmpiricalDistribution(self.atoms, self.probs)

    def sample(self, n: int, rng: np.random.Generator) -> list[Instance]:
        idx = rng.choice(len(self.atoms), size=n, p=self.probs)
        return [self.atoms[i] for i in idx]

    def empirical(self, n: int, rng: np.random.Generator) -> EmpiricalDistribution:
        """Empirical measure of n i.i.d. draws, with repeated atoms merged."""
        counts = rng.multinomial(n, self.probs)
        keep = np.nonzero(counts)[0]
        return EmpiricalDistribution(tuple(self.atoms[i] for i in keep), counts[keep] / n)


def random_atomic_law(space: SpaceSpec, k: int, rng: np.random.Generator) -> AtomicLaw:
    """``k`` atoms uniform in the box of Z (soft labels included), Dirichlet(1) weights."""
    lo = np.array([space.label_range[0], *(a for a, _ in space.feature_box)])
    hi = np.array([space.label_range[1], *(b for _, b in space.feature_box)])
    z = rng.uniform(lo, hi, size=(k, lo.size))
    return AtomicLaw(tuple(Instance(row[0], row[1:]) for row in z), rng.dirichlet(np.ones(k)))


def logistic_sample(
    space: SpaceSpec, n: int, rng: np.random.Generator, true_theta: Sequence[float] | None = None
) -> list[Instance]:
    """Uniform features; hard labels from ``sigmoid(<true_theta, x - center>)``."""
    lo = np.array([a for a, _ in space.feature_box])
    hi = np.array([b for _, b in space.feature_box])
    w = np.full(lo.size, 4.0) if true_theta is None else np.asarray(true_theta, dtype=float)
    X = rng.uniform(lo, hi, size=(n, lo.size))
    y = (rng.random(n) < expit((X - 0.5 * (lo + hi)) @ w)).astype(float)
    return [Instance(yi, xi) for yi, xi in zip(y, X)]


def make_synthetic(spec: dict, space: SpaceSpec) -> tuple[list[Instance], list[Instance]]:
    """Labeled sample and unlabeled pool from a ``data.synthetic`` config block.

    Keys: ``n_labeled``, ``n_pool``, ``generator_seed`` and optionally
    ``true_distribution`` (list of ``{"y", "x", "weight"}``) or ``true_theta``.
    Pool points carry the placeholder label 0.5.
    """
    try:
        n_labeled, n_pool = int(spec["n_labeled"]), int(spec["n_pool"])
    except KeyError as exc:
        raise ConfigError(f"synthetic data spec is missing {exc}") from None
    rng = np.random.default_rng(int(spec.get("generator_seed", 0)))
    if spec.get("true_distribution"):
        law = AtomicLaw.from_dicts(spec["true_distribution"])
        space.check(law.atoms)
        labeled = law.sample(n_labeled, rng)
        pool = law.sample(n_pool, rng)
    else:
        labeled = logistic_sample(space, n_labeled, rng, spec.get("true_theta"))
        pool = logistic_sample(space, n_pool, rng, spec.get("true_theta"))
    return labeled, [Instance(0.5, inst.x) for inst in pool]
