"""Instance space, metric and empirical distributions.

An instance is a point ``z = (y, x)`` of ``Z = Y x X`` where ``Y = [0, 1]``
holds (soft) binary labels and ``X`` is a box in ``R^d_x``.  Distances on Z
are Euclidean on the concatenated vector.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

Box = tuple[tuple[float, float], ...]

WEIGHT_TOL = 1e-12


def _as_box(intervals) -> Box:
    box = tuple((float(lo), float(hi)) for lo, hi in intervals)
    for lo, hi in box:
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ConfigError(f"box interval [{lo}, {hi}] is empty or unbounded")
    return box


@dataclass(frozen=True)
class SpaceSpec:
    """Dimensions and bounding boxes of Z = Y x X and of the parameter space."""

    feature_box: Box
    theta_box: Box
    p: float = 1.0
    label_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "feature_box", _as_box(self.feature_box))
        object.__setattr__(self, "theta_box", _as_box(self.theta_box))
        (label_box,) = _as_box([self.label_range])
        object.__setattr__(self, "label_range", label_box)
        object.__setattr__(self, "p", float(self.p))
        if not self.feature_box:
            raise ConfigError("feature_box must have at least one coordinate")
        if len(self.theta_box) != self.d_x:
            raise ConfigError(
                f"theta_box has {len(self.theta_box)} coordinates, expected d_x={self.d_x}"
            )
        if not 1.0 <= self.p <= 2.0:
            raise ConfigError(f"Wasserstein order p={self.p} outside [1, 2]")
        if not self.d > 2 * self.p:
            raise ConfigError(
                f"d={self.d} must exceed 2p={2 * self.p} for the concentration rate"
            )

    @property
    def d_x(self) -> int:
        return len(self.feature_box)

    @property
    def d_y(self) -> int:
        return 1

    @property
    def d(self) -> int:
        return self.d_x + self.d_y

    @classmethod
    def from_dict(cls, cfg: dict) -> "SpaceSpec":
        try:
            space = cls(
                feature_box=cfg["feature_box"],
                theta_box=cfg["theta_box"],
                p=cfg.get("p", 1.0),
                label_range=tuple(cfg.get("label_range", (0.0, 1.0))),
            )
        except KeyError as exc:
            raise ConfigError(f"space config is missing key {exc}") from None
        if "d_x" in cfg and int(cfg["d_x"]) != space.d_x:
            raise ConfigError(f"d_x={cfg['d_x']} disagrees with feature_box of size {space.d_x}")
        return space

    def to_dict(self) -> dict:
        return {
            "d_x": self.d_x,
            "feature_box": [list(iv) for iv in self.feature_box],
            "theta_box": [list(iv) for iv in self.theta_box],
            "label_range": list(self.label_range),
            "p": self.p,
        }

    def with_p(self, p: float) -> "SpaceSpec":
        return SpaceSpec(self.feature_box, self.theta_box, p, self.label_range)

    def contains(self, inst: "Instance", atol: float = 1e-12) -> bool:
        if len(inst.x) != self.d_x:
            return False
        lo, hi = self.label_range
        if not lo - atol <= inst.y <= hi + atol:
            return False
        return all(a - atol <= v <= b + atol for v, (a, b) in zip(inst.x, self.feature_box))

    def check(self, instances: Iterable["Instance"]) -> None:
        for i, inst in enumerate(instances):
            if not self.contains(inst):
                raise ConfigError(f"instance #{i} {inst} lies outside the declared space")


def load_space(path: str | Path) -> SpaceSpec:
    with open(path) as fh:
        return SpaceSpec.from_dict(json.load(fh))


@dataclass(frozen=True)
class Instance:
    """One point (y, x).  Hard labels are stored as 0.0 / 1.0."""

    y: float
    x: tuple[float, ...]
    pseudo: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))

    def as_array(self) -> np.ndarray:
        return np.array((self.y, *self.x))


def instance_distance(a: Instance, b: Instance, space: SpaceSpec | None = None) -> float:
    if len(a.x) != len(b.x) or (space is not None and len(a.x) != space.d_x):
        raise ConfigError(f"dimension mismatch: {len(a.x)} vs {len(b.x)}")
    return float(np.linalg.norm(a.as_array() - b.as_array()))


def _widths(box: Box) -> np.ndarray:
    return np.array([hi - lo for lo, hi in box])


def diameter_z(space: SpaceSpec) -> float:
    """Largest distance between two points of Z (norm of the box side lengths)."""
    return float(np.linalg.norm(_widths((space.label_range, *space.feature_box))))


def _sup_norm(box: Box) -> float:
    return float(np.linalg.norm([max(abs(lo), abs(hi)) for lo, hi in box]))


def diameters_x_theta(space: SpaceSpec, theta_convention: str = "sup_norm") -> tuple[float, float]:
    """Return ``(D_X, D_Theta)``.

    ``D_X`` is ``sup ||x||`` over the feature box.  With
    ``theta_convention="sup_norm"`` ``D_Theta`` is ``sup ||theta||``; with
    ``"box_diameter"`` it is the diameter of the parameter box, e.g.
    ``sqrt(200^2 + 200^2)`` for ``[-100, 100]^2``, which is the value used in
    the worked logistic example.
    """
    d_x = _sup_norm(space.feature_box)
    if theta_convention == "sup_norm":
        d_theta = _sup_norm(space.theta_box)
    elif theta_convention == "box_diameter":
        d_theta = float(np.linalg.norm(_widths(space.theta_box)))
    else:
        raise ConfigError(f"unknown theta_convention {theta_convention!r}")
    return d_x, d_theta


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Finitely supported distribution with explicit weights."""

    points: tuple[Instance, ...]
    weights: np.ndarray

    def __post_init__(self):
        points = tuple(self.points)
        if not points:
            raise ConfigError("empirical distribution needs at least one point")
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(points),):
            raise ConfigError(f"{w.size} weights for {len(points)} points")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ConfigError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
        w.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, EmpiricalDistribution):
            return NotImplemented
        return self.points == other.points and np.array_equal(self.weights, other.weights)

    __hash__ = None

    @cached_property
    def array(self) -> np.ndarray:
        """``(n, d)`` matrix of instances, label in column 0."""
        z = np.array([inst.as_array() for inst in self.points])
        z.setflags(write=False)
        return z

    @property
    def labels(self) -> np.ndarray:
        return self.array[:, 0]

    @property
    def features(self) -> np.ndarray:
        return self.array[:, 1:]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


def make_empirical(points: Sequence[Instance]) -> EmpiricalDistribution:
    points = tuple(points)
    if not points:
        raise ConfigError("cannot build an empirical distribution from no points")
    n = len(points)
    return EmpiricalDistribution(points, np.full(n, 1.0 / n))


def read_dataset_csv(path: str | Path, space: SpaceSpec) -> tuple[list[Instance], list[Instance]]:
    """Read ``x_1..x_{d_x}, y`` rows; rows with an empty ``y`` form the pool.

    Pool instances get the placeholder label 0.5 (it is never used for fitting).
    """
    labeled, pool = [], []
    cols = [f"x_{j + 1}" for j in range(space.d_x)]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in (*cols, "y") if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"{path}: missing columns {missing}")
        for row in reader:
            x = tuple(float(row[c]) for c in cols)
            y = row["y"].strip()
            if y:
                labeled.append(Instance(float(y), x))
            else:
                pool.append(Instance(0.5, x))
    space.check(labeled)
    space.check(pool)
    return labeled, pool


def write_dataset_csv(path: str | Path, points: Iterable[Instance], d_x: int, pool: Iterable[Instance] = ()) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*(f"x_{j + 1}" for j in range(d_x)), "y"])
        for inst in points:
            writer.writerow([*(repr(v) for v in inst.x), repr(inst.y)])
        for inst in pool:
            writer.writerow([*(repr(v) for v in inst.x), ""])
