"""``rec-bounds`` command line: run, bound, stop, curve, validate.

Exit codes: 0 success, 1 usage or configuration error, 2 validation
violation, 3 numerical failure.  Every error also writes a one-line JSON
diagnostic to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bounds import THEOREMS, BoundInputs, covering_entropy_linear, evaluate, stopping_time
from .core import diameter_z, diameters_x_theta, load_space
from .errors import ConfigError, RecBoundsError, ValidationFailure
from .harness import ExperimentConfig, curve_rows, json_safe, rows_to_csv, run_experiment
from .learner import LossSpec, loss_constants
from .validation import SUITES, run_suite

log = logging.getLogger("recbounds")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# (flag, dest, type) for every BoundInputs field
_BOUND_FLAGS = [
    ("--n", "n", int),
    ("--m", "m", int),
    ("--T", "T", float),
    ("--p", "p", float),
    ("--d", "d", int),
    ("--D-Z", "D_Z", float),
    ("--L-ell", "L_ell", float),
    ("--L-s", "L_s", float),
    ("--C-a", "C_a", float),
    ("--C-b", "C_b", float),
    ("--kappa", "kappa", float),
    ("--gamma", "gamma", float),
    ("--L-a", "L_a", float),
    ("--F-bound", "F_bound", float),
    ("--covering-entropy", "covering_entropy", float),
]


def _add_bound_flags(sub: argparse.ArgumentParser, multi_delta: bool = False) -> None:
    g = sub.add_argument_group("bound inputs")
    for flag, dest, typ in _BOUND_FLAGS:
        g.add_argument(flag, dest=dest, type=typ, default=None)
    if multi_delta:
        g.add_argument("--delta", type=float, nargs="+", default=[0.05, 0.1])
    else:
        g.add_argument("--delta", type=float, default=None)
    g.add_argument("--space", type=Path, help="space JSON; fills d, p, D_Z and the loss constants")
    g.add_argument("--ridge-lambda", type=float, default=0.0, help="ridge weight used with --space")


def _parse_T(value) -> float:
    if value is None:
        return 0
    if math.isinf(value):
        return math.inf
    if value != int(value) or value < 0:
        raise ConfigError(f"--T must be a nonnegative integer or inf, got {value}")
    return int(value)


def bound_inputs_from_args(args, delta: float | None = None) -> BoundInputs:
    """Collect ``BoundInputs`` from flags, filling gaps from ``--space`` if given.

    Without ``--L-s``, single-point adaptation (m = 1) uses ``(n-1)/n``.
    """
    values = {dest: getattr(args, dest) for _, dest, _ in _BOUND_FLAGS}
    values["delta"] = args.delta if delta is None else delta
    if args.space is not None:
        space = load_space(args.space)
        kind = "ridge_logistic" if args.ridge_lambda > 0 else "logistic"
        consts = loss_constants(LossSpec(space, kind, args.ridge_lambda))
        d_x, d_theta = diameters_x_theta(space, "sup_norm")
        derived = {
            "d": space.d,
            "p": space.p,
            "D_Z": diameter_z(space),
            "L_ell": consts.L_ell,
            "kappa": consts.kappa,
            "gamma": consts.gamma if consts.gamma > 0 else None,
            "F_bound": consts.F_bound,
            "covering_entropy": covering_entropy_linear(space.d_x, d_x * d_theta),
        }
        for k, v in derived.items():
            if values[k] is None:
                values[k] = v
    if values["m"] is None:
        values["m"] = 1
    if values["p"] is None:
        values["p"] = 1.0
    values["T"] = _parse_T(values["T"])
    missing = [k for k in ("n", "delta", "d", "D_Z", "L_ell") if values[k] is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise ConfigError(f"missing required flag(s) {flags} (or give --space for d, D_Z, L_ell)")
    if values["L_s"] is None and values["m"] == 1:
        values["L_s"] = (values["n"] - 1) / values["n"]
    return BoundInputs(**values)


def _emit(obj) -> None:
    print(json.dumps(json_safe(obj), sort_keys=True, indent=2, allow_nan=False))


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    summary = run_experiment(cfg, args.out)
    _emit(summary)
    return 0


def cmd_bound(args) -> int:
    inputs = bound_inputs_from_args(args)
    data = {"train_risk": args.train_risk, "risk_T": args.risk_T, "risk_0": args.risk_0}
    data = {k: v for k, v in data.items() if v is not None}
    report = evaluate(args.theorem, inputs, **data)
    _emit(report.to_dict())
    return 0


def cmd_stop(args) -> int:
    inputs = bound_inputs_from_args(args)
    t_star = stopping_time(args.epsilon, inputs)  # budget/condition errors propagate
    if math.isinf(t_star):
        _emit({"epsilon": args.epsilon, "status": "unbounded", "T": None, "t_star": None})
    else:
        _emit({"epsilon": args.epsilon, "status": "ok", "T": math.floor(t_star), "t_star": t_star})
    return 0


def cmd_curve(args) -> int:
    if args.stop < args.start or args.step <= 0:
        raise ConfigError("need start <= stop and step > 0")
    grid = np.arange(args.start, args.stop + 0.5 * args.step, args.step)
    # both sweep variables are integer counts
    grid = np.unique(np.maximum(1 if args.sweep == "n" else 0, np.round(grid)).astype(int))
    if args.sweep == "n" and args.n is None:
        args.n = int(grid[0])
    base = bound_inputs_from_args(args, delta=args.delta[0])
    ls_rule = args.ls_rule
    if ls_rule == "auto":
        ls_rule = "fixed" if args.L_s is not None else "theoretical"
    rows = curve_rows(base, args.sweep, [v.item() for v in grid], args.delta, ls_rule)
    text = rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    report = run_suite(args.suite, args.trials, args.seed, args.out)
    _emit(report.to_dict())
    if not report.passed:
        raise ValidationFailure(json.dumps(json_safe({"suite": report.suite, "worst": report.worst}), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rec-bounds", description="Reciprocal-learning bounds and self-training experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = subs.add_parser("run", help="run a self-training experiment from a JSON config")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, default=None, help="output directory (default: config's output_dir)")
    run.set_defaults(func=cmd_run)

    bound = subs.add_parser("bound", help="evaluate one bound")
    bound.add_argument("--theorem", choices=THEOREMS, required=True)
    _add_bound_flags(bound)
    bound.add_argument("--train-risk", type=float, default=None)
    bound.add_argument("--risk-T", dest="risk_T", type=float, default=None)
    bound.add_argument("--risk-0", dest="risk_0", type=float, default=None)
    bound.set_defaults(func=cmd_bound)

    stop = subs.add_parser("stop", help="largest T keeping the anytime gap within epsilon")
    stop.add_argument("--epsilon", type=float, required=True)
    _add_bound_flags(stop)
    stop.set_defaults(func=cmd_stop)

    curve = subs.add_parser("curve", help="CSV of the anytime gap along a T or n grid")
    curve.add_argument("--sweep", choices=("T", "n"), default="T")
    curve.add_argument("--start", type=float, default=0)
    curve.add_argument("--stop", type=float, default=1000)
    curve.add_argument("--step", type=float, default=10)
    curve.add_argument(
        "--ls-rule",
        choices=("auto", "fixed", "theoretical"),
        default="auto",
        help="'theoretical' sets L_s=(n-1)/n per row; 'auto' does so unless --L-s is given",
    )
    curve.add_argument("--out", type=Path, default=None)
    _add_bound_flags(curve, multi_delta=True)
    curve.set_defaults(func=cmd_curve)

    val = subs.add_parser("validate", help="run a validation suite")
    val.add_argument("--suite", choices=SUITES, required=True)
    val.add_argument("--trials", type=int, default=None)
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--out", type=Path, default=None, help="directory for per-trial details")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except RecBoundsError as exc:
        diag = {"error": exc.code, "message": str(exc), "exit_code": exc.exit_code}
        print(json.dumps(diag, sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"error": "io_error", "message": str(exc), "exit_code": 1}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
