"""Config-driven experiment runs and bound-curve sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .bounds import (
    BoundInputs,
    BoundReport,
    anytime_excess_risk_bound,
    anytime_gap_bound,
    covering_entropy_linear,
    data_dependent_excess_bound,
    evaluate,
    stopping_time,
)
from .core import SpaceSpec, diameter_z, diameters_x_theta, read_dataset_csv, write_dataset_csv
from .errors import ConfigError, RecBoundsError
from .learner import LossSpec, loss_constants, risk
from .reciprocal import AdaptationConfig, ReciprocalPath, detect_convergence, estimate_ls, run_reciprocal
from .synthetic import make_synthetic

log = logging.getLogger(__name__)

_BOUND_FIELDS = set(BoundInputs.field_names())


@dataclass(frozen=True)
class ExperimentConfig:
    space: SpaceSpec
    loss: LossSpec
    adaptation: AdaptationConfig
    T: int
    data: dict
    output_dir: Path
    bounds: dict = field(default_factory=dict)
    tol: float = 1e-8
    max_iter: int = 50_000
    convergence_tol: float = 1e-6
    epsilon: float | None = None
    theta_convention: str = "box_diameter"
    export_samples: bool = False

    @classmethod
    def from_dict(cls, cfg: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        base_dir = Path(base_dir or ".")
        try:
            space_cfg = cfg["space"]
            if isinstance(space_cfg, str):
                space_cfg = json.loads((base_dir / space_cfg).read_text())
            space = SpaceSpec.from_dict(space_cfg)
            loss_cfg = cfg.get("loss", {})
            loss = LossSpec(space, loss_cfg.get("kind", "logistic"), float(loss_cfg.get("ridge_lambda", 0.0)))
            ad = dict(cfg.get("adaptation", {}))
            T = int(ad.pop("T", cfg.get("T", 0)))
            if "temperature" in ad:
                ad["selection_temperature"] = ad.pop("temperature")
            adaptation = AdaptationConfig(**ad)
            data = dict(cfg["data"])
        except KeyError as exc:
            raise ConfigError(f"config is missing key {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"bad config entry: {exc}") from None

        has_paths = any(k in data for k in ("csv", "labeled_csv", "pool_csv"))
        if has_paths == ("synthetic" in data):
            raise ConfigError("data needs exactly one of: csv paths, or a synthetic spec")
        for key in ("csv", "labeled_csv", "pool_csv"):
            if key in data:
                data[key] = str(base_dir / data[key])

        bounds = dict(cfg.get("bounds", {}))
        unknown = set(bounds) - _BOUND_FIELDS
        if unknown:
            raise ConfigError(f"unknown bound overrides {sorted(unknown)}")
        solver = cfg.get("solver", {})
        return cls(
            space=space,
            loss=loss,
            adaptation=adaptation,
            T=T,
            data=data,
            output_dir=base_dir / cfg.get("output_dir", "out"),
            bounds=bounds,
            tol=float(solver.get("tol", 1e-8)),
            max_iter=int(solver.get("max_iter", 50_000)),
            convergence_tol=float(cfg.get("convergence_tol", 1e-6)),
            epsilon=cfg.get("epsilon"),
            theta_convention=cfg.get("theta_convention", "box_diameter"),
            export_samples=bool(cfg.get("export_samples", False)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            cfg = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(cfg, path.parent)

    def load_data(self):
        if "synthetic" in self.data:
            return make_synthetic(self.data["synthetic"], self.space)
        if "csv" in self.data:
            return read_dataset_csv(self.data["csv"], self.space)
        labeled, pool = [], []
        if "labeled_csv" in self.data:
            labeled, extra = read_dataset_csv(self.data["labeled_csv"], self.space)
            pool += extra
        if "pool_csv" in self.data:
            more, extra = read_dataset_csv(self.data["pool_csv"], self.space)
            labeled += more
            pool += extra
        return labeled, pool


def theoretical_ls(adaptation: AdaptationConfig, n: int) -> float | None:
    """``(n-1)/n`` for greedy single-point adaptation, the only closed form available."""
    if adaptation.greedy and adaptation.m == 1:
        return (n - 1) / n
    return None


def resolve_ls(path: ReciprocalPath, override: float | None) -> tuple[float | None, str, float | None]:
    """Pick L_s: explicit override, else theory, else the empirical ratio."""
    try:
        estimate = estimate_ls(path)
    except ConfigError:
        estimate = None
    if override is not None:
        return float(override), "override", estimate
    theory = theoretical_ls(path.adaptation, path.n0)
    if theory is not None:
        return theory, "theoretical", estimate
    if estimate is not None:
        return estimate, "empirical", estimate
    return None, "unavailable", None


def run_bound_inputs(cfg: ExperimentConfig, path: ReciprocalPath, L_s: float | None) -> BoundInputs:
    consts = loss_constants(cfg.loss, cfg.theta_convention)
    d_x, d_theta = diameters_x_theta(cfg.space, "sup_norm")
    base = dict(
        n=path.n0,
        m=cfg.adaptation.m,
        T=path.horizon,
        p=cfg.space.p,
        d=cfg.space.d,
        D_Z=diameter_z(cfg.space),
        L_ell=consts.L_ell,
        L_s=L_s,
        delta=0.05,
        kappa=consts.kappa,
        gamma=consts.gamma,
        F_bound=consts.F_bound,
        covering_entropy=covering_entropy_linear(cfg.space.d_x, d_x * d_theta),
    )
    base.update(cfg.bounds)
    return BoundInputs(**base)


def _try(fn, *args) -> dict:
    try:
        return fn(*args).to_dict()
    except RecBoundsError as exc:
        return {"error": exc.code, "message": str(exc)}


def iteration_reports(inputs: BoundInputs, path: ReciprocalPath, loss: LossSpec) -> list[dict]:
    P0, theta0 = path.iterations[0].sample, path.iterations[0].theta
    r0 = risk(P0, theta0, loss)
    rows = []
    for rec in path.iterations:
        at_t = inputs.with_(T=rec.t)
        rows.append(
            {
                "t": rec.t,
                "anytime-gap": _try(anytime_gap_bound, at_t, rec.train_risk),
                "data-dependent-excess": _try(data_dependent_excess_bound, at_t, risk(P0, rec.theta, loss), r0),
                "anytime-excess-risk": _try(anytime_excess_risk_bound, at_t),
            }
        )
    return rows


def json_safe(obj):
    """Replace non-finite floats by ``None`` so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def _dump(obj) -> str:
    return json.dumps(json_safe(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def run_experiment(cfg: ExperimentConfig, output_dir: Path | None = None) -> dict:
    """Run, write ``path.jsonl``, ``bounds.jsonl`` and ``summary.json``; return the summary."""
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    labeled, pool = cfg.load_data()
    path = run_reciprocal(labeled, pool, cfg.T, cfg.loss, cfg.adaptation, cfg.tol, cfg.max_iter)

    L_s, source, estimate = resolve_ls(path, cfg.bounds.get("L_s"))
    inputs = run_bound_inputs(cfg, path, L_s)
    reports = iteration_reports(inputs, path, cfg.loss)

    (out / "path.jsonl").write_text(path.to_jsonl())
    (out / "bounds.jsonl").write_text("".join(json.dumps(json_safe(r), sort_keys=True, allow_nan=False) + "\n" for r in reports))
    if cfg.export_samples:
        snap = out / "samples"
        snap.mkdir(exist_ok=True)
        for rec in path.iterations:
            write_dataset_csv(snap / f"sample_t{rec.t:04d}.csv", rec.sample.points, cfg.space.d_x)

    final = {}
    data = {"train_risk": path.iterations[-1].train_risk}
    for theorem in ("gen-gap", "anytime-gap", "excess-risk", "anytime-excess-risk"):
        final[theorem] = _try(lambda th, inp: evaluate(th, inp, **data), theorem, inputs)
    P0 = path.iterations[0].sample
    final["data-dependent-excess"] = _try(
        data_dependent_excess_bound,
        inputs,
        risk(P0, path.iterations[-1].theta, cfg.loss),
        risk(P0, path.iterations[0].theta, cfg.loss),
    )
    summary = {
        "status": path.status,
        "requested_T": cfg.T,
        "horizon": path.horizon,
        "iterations": len(path.iterations),
        "n0": path.n0,
        "final_n": len(path.iterations[-1].sample),
        "pool_remaining": len(path.pool_remaining),
        "L_s": L_s,
        "L_s_source": source,
        "L_s_empirical": estimate,
        "convergence_index": detect_convergence(path, cfg.convergence_tol),
        "erm_all_converged": all(rec.theta.converged for rec in path.iterations),
        "bound_inputs": asdict(inputs),
        "bounds": final,
    }
    if cfg.epsilon is not None:
        summary["stopping_rule"] = stop_summary(float(cfg.epsilon), inputs)
    (out / "summary.json").write_text(_dump(summary))
    return summary


def stop_summary(epsilon: float, inputs: BoundInputs) -> dict:
    try:
        t_star = stopping_time(epsilon, inputs)
    except RecBoundsError as exc:
        return {"epsilon": epsilon, "status": exc.code, "message": str(exc), "T": None, "t_star": None}
    if math.isinf(t_star):
        return {"epsilon": epsilon, "status": "unbounded", "T": None, "t_star": None}
    return {"epsilon": epsilon, "status": "ok", "T": math.floor(t_star), "t_star": t_star}


CURVE_COLUMNS = ("t", "initial_gap", "reciprocal_gap", "total", "delta", "n")


def curve_rows(
    inputs: BoundInputs,
    sweep: str,
    values: Iterable[float],
    deltas: Sequence[float],
    ls_rule: str = "fixed",
) -> list[dict]:
    """Anytime-gap terms along a T or n grid, one block per delta.

    With ``ls_rule="theoretical"`` each row uses ``L_s = (n-1)/n``.
    """
    if sweep not in ("T", "n"):
        raise ConfigError("sweep must be 'T' or 'n'")
    values = list(values)
    rows = []
    for delta in deltas:
        for v in values:
            point = inputs.with_(delta=delta, **{sweep: int(v)})
            if ls_rule == "theoretical":
                point = point.with_(L_s=(point.n - 1) / point.n)
            rep: BoundReport = anytime_gap_bound(point)
            rows.append(
                {
                    "t": point.T,
                    "initial_gap": rep.initial_gap,
                    "reciprocal_gap": rep.reciprocal_gap,
                    "total": rep.gap,
                    "delta": delta,
                    "n": point.n,
                }
            )
    return rows


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] = CURVE_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()
