"""Acceptance criteria, one marked test (or group) per criterion.

Run ``pytest tests/test_acceptance.py`` for the pass/fail table printed at
the end of the session.  Criteria 1-3 use the stated worked-example inputs
verbatim, including C_b = 1/12; see README for why they do not reproduce the
quoted figures.
"""

import csv
import io
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recbounds import cli
from recbounds.bounds import (
    BoundInputs,
    anytime_excess_risk_bound,
    anytime_gap_bound,
    distortion_bound,
    excess_risk_bound,
    gen_gap_bound,
    stopping_time,
)
from recbounds.core import SpaceSpec
from recbounds.learner import LossSpec, loss, loss_gradient
from recbounds.validation import run_suite

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

WORKED = [
    "--n", "10000", "--delta", "0.05", "--p", "1", "--d", "3",
    "--C-a", "8", "--C-b", repr(1 / 12), "--L-ell", repr(math.sqrt(2)),
    "--T", "100", "--L-s", repr(9999 / 10000), "--m", "1", "--D-Z", repr(math.sqrt(3)),
]


def cli_json(capsys, *argv):
    start = time.perf_counter()
    code = cli.main(list(argv))
    elapsed = time.perf_counter() - start
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out else None), err, elapsed


@pytest.mark.criterion(1, "worked example initial gap 0.1627")
def test_initial_gap(capsys):
    code, rep, _, elapsed = cli_json(capsys, "bound", "--theorem", "anytime-gap", *WORKED)
    assert code == 0 and elapsed < 1.0
    assert rep["initial_gap"] == pytest.approx(0.1627, abs=5e-4)


@pytest.mark.criterion(2, "worked example reciprocal gap 0.0244 and total 0.1871")
class TestReciprocalAndTotal:
    def test_reciprocal_gap(self, capsys):
        code, rep, _, elapsed = cli_json(capsys, "bound", "--theorem", "anytime-gap", *WORKED)
        assert code == 0 and elapsed < 1.0
        assert rep["reciprocal_gap"] == pytest.approx(0.0244, abs=5e-4)

    def test_total(self, capsys):
        code, rep, _, elapsed = cli_json(capsys, "bound", "--theorem", "anytime-gap", *WORKED)
        assert code == 0 and elapsed < 1.0
        assert rep["gap"] == pytest.approx(0.1871, abs=1e-3)


@pytest.mark.criterion(3, "stopping rule at epsilon 0.2: T* 153.46, floor 153")
def test_stopping_rule(capsys):
    code, res, err, elapsed = cli_json(capsys, "stop", "--epsilon", "0.2", *WORKED)
    assert elapsed < 1.0
    assert code == 0, err
    assert res["t_star"] == pytest.approx(153.46, abs=0.15)
    assert res["T"] == 153


@pytest.mark.criterion(4, "LP transport matches permutation brute force on 200 pairs")
def test_oracle_equivalence(tmp_path):
    start = time.perf_counter()
    report = run_suite("oracle_ot", trials=200, seed=0, out_dir=tmp_path)
    assert time.perf_counter() - start < 120
    assert report.trials == 200
    assert report.violations == 0
    assert report.passed


@pytest.mark.criterion(5, "W_p(P_0, P_T) <= beta_T on 100 self-training runs")
def test_distortion_validity(tmp_path):
    start = time.perf_counter()
    report = run_suite("distortion", trials=100, seed=0, out_dir=tmp_path)
    assert time.perf_counter() - start < 600
    assert report.trials == 100
    assert report.violations == 0
    assert "step_cap" in report.summary["checks_per_step"]
    assert report.worst_slack >= 0


@pytest.mark.criterion(6, "concentration radius covers with frequency >= 1 - delta")
def test_concentration_coverage(tmp_path):
    start = time.perf_counter()
    report = run_suite("concentration", trials=1000, seed=0, out_dir=tmp_path)
    assert time.perf_counter() - start < 900
    assert report.trials == 1000
    cells = report.summary
    assert set(cells) == {f"n={n},delta={d}" for n in (50, 200) for d in (0.05, 0.1)}
    for cell in cells.values():
        assert cell["coverage"] >= cell["required"]
    assert report.passed


@pytest.mark.criterion(7, "analytic loss gradient vs central differences on 500 triples")
def test_gradient_finite_differences():
    start = time.perf_counter()
    rng = np.random.default_rng(20240501)
    space = SpaceSpec.from_dict({"d_x": 3, "feature_box": [[-1, 1]] * 3, "theta_box": [[-4, 4]] * 3, "p": 1.0})
    specs = (LossSpec(space, "logistic"), LossSpec(space, "ridge_logistic", 0.3))
    h = 1e-6
    worst = 0.0
    for i in range(500):
        spec = specs[i % 2]
        q = rng.random() if i % 3 else float(rng.integers(2))
        x, theta = rng.uniform(-1, 1, 3), rng.uniform(-4, 4, 3)
        fd = np.array([(loss(q, x, theta + h * e, spec) - loss(q, x, theta - h * e, spec)) / (2 * h) for e in np.eye(3)])
        g = loss_gradient(q, x, theta, spec)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), np.linalg.norm(g), 1e-300))
    assert worst <= 1e-5
    assert time.perf_counter() - start < 5


BASE = BoundInputs(
    n=500, delta=0.05, d=3, p=1.0, D_Z=math.sqrt(3), L_ell=math.sqrt(2), L_s=0.9, T=40,
    kappa=0.25, gamma=0.5, L_a=1.3, F_bound=1.0, covering_entropy=1.7,
)


@pytest.mark.criterion(8, "bound-structure properties and curve shape")
class TestStructure:
    @settings(max_examples=200, deadline=None)
    @given(
        L_s=st.floats(0.0, 1.5),
        T=st.integers(0, 300),
        n=st.integers(1, 10_000),
        m=st.integers(1, 5),
    )
    def test_beta_monotone(self, L_s, T, n, m):
        # one-ulp rounding in the closed-form series is not a monotonicity failure
        b = distortion_bound(L_s, T, m, n, 1.0, 1.0)
        lo, hi = b * (1 - 1e-12), b * (1 + 1e-12)
        assert distortion_bound(L_s, T + 1, m, n, 1.0, 1.0) >= lo
        assert distortion_bound(L_s + 0.01, T, m, n, 1.0, 1.0) >= lo
        assert distortion_bound(L_s, T, m, n + 1, 1.0, 1.0) <= hi

    @pytest.mark.parametrize("L_s", [0.0, 0.3, 0.9, 0.9999])
    def test_anytime_at_infinity_is_convergent(self, L_s):
        inp = BASE.with_(L_s=L_s)
        a, b = anytime_gap_bound(inp.with_(T=math.inf)), gen_gap_bound(inp)
        for term in ("initial_gap", "reciprocal_gap", "complexity_term", "total"):
            assert getattr(a, term) == pytest.approx(getattr(b, term), abs=1e-10)

    @pytest.mark.parametrize("eps", [0.3, 0.35, 0.45, 0.5])
    def test_stopping_inversion(self, eps):
        inp = BASE.with_(n=10_000, L_s=0.999)
        T = math.floor(stopping_time(eps, inp))
        assert anytime_gap_bound(inp.with_(T=T)).gap <= eps
        assert anytime_gap_bound(inp.with_(T=T + 1)).gap > eps

    def test_anytime_excess_at_infinity(self):
        assert BASE.L_s * BASE.kappa / BASE.gamma < 1
        far = anytime_excess_risk_bound(BASE.with_(T=math.inf))
        conv = excess_risk_bound(BASE)
        assert far.reciprocal_gap == pytest.approx(conv.reciprocal_gap, abs=1e-10)
        assert far.total == pytest.approx(conv.total, abs=1e-10)

    def _curve(self, capsys, *argv):
        code = cli.main(["curve", *argv])
        out, _ = capsys.readouterr()
        assert code == 0
        return list(csv.DictReader(io.StringIO(out)))

    def test_curve_shape(self, capsys):
        start = time.perf_counter()
        common = ["--d", "3", "--D-Z", repr(math.sqrt(3)), "--L-ell", repr(math.sqrt(2)), "--delta", "0.05", "0.1"]
        over_T = self._curve(capsys, "--sweep", "T", "--start", "0", "--stop", "1000", "--step", "50",
                             "--n", "10000", *common)
        over_n = self._curve(capsys, "--sweep", "n", "--start", "1000", "--stop", "20000", "--step", "1000",
                             "--T", "100", *common)
        for rows, sign in ((over_T, 1), (over_n, -1)):
            by_delta = {d: [float(r["total"]) for r in rows if r["delta"] == d] for d in ("0.05", "0.1")}
            for totals in by_delta.values():
                assert all(sign * (b - a) > 0 for a, b in zip(totals, totals[1:]))
            assert all(a > b for a, b in zip(by_delta["0.05"], by_delta["0.1"]))
        assert time.perf_counter() - start < 10


@pytest.mark.criterion(9, "cmd_run is byte-identical across repeated runs")
@pytest.mark.parametrize("config", ["worked_example.json", "demo_nongreedy.json"])
def test_determinism(capsys, tmp_path, config):
    outputs = []
    for run in ("a", "b"):
        assert cli.main(["run", str(CONFIGS / config), "--out", str(tmp_path / run)]) == 0
        capsys.readouterr()
        files = sorted(p.relative_to(tmp_path / run) for p in (tmp_path / run).rglob("*") if p.is_file())
        outputs.append({f: (tmp_path / run / f).read_bytes() for f in files})
    assert outputs[0].keys() == outputs[1].keys()
    assert {"path.jsonl", "bounds.jsonl", "summary.json"} <= {str(f) for f in outputs[0]}
    assert outputs[0] == outputs[1]
