import math

import numpy as np
import pytest
from scipy.special import expit

from recbounds.core import Instance, SpaceSpec, diameter_z, make_empirical
from recbounds.errors import ConfigError
from recbounds.learner import LossSpec, Model, erm
from recbounds.reciprocal import (
    AdaptationConfig,
    IterationRecord,
    ReciprocalPath,
    adapt_sample,
    contraction_ratio,
    detect_convergence,
    estimate_ls,
    pseudo_label,
    run_reciprocal,
    select_candidates,
)
from recbounds.transport import wasserstein_distance

SPACE = SpaceSpec(feature_box=((0, 1), (0, 1)), theta_box=((-5, 5), (-5, 5)))
RIDGE = LossSpec(SPACE, "ridge_logistic", 0.1)
D_Z = diameter_z(SPACE)


def labeled_points(rng, n):
    X = rng.uniform(size=(n, 2))
    y = (rng.uniform(size=n) < expit(4 * (X[:, 0] - X[:, 1]))).astype(float)
    return [Instance(a, b) for a, b in zip(y, X)]


def pool_points(rng, n):
    return [Instance(0.5, x) for x in rng.uniform(size=(n, 2))]


def synthetic_path(steps, thetas=None):
    """ReciprocalPath with prescribed step distances (samples are placeholders)."""
    P = make_empirical([Instance(0, (0, 0))])
    thetas = thetas or [np.zeros(2)] * (len(steps) + 1)
    recs = [IterationRecord(0, Model(thetas[0]), P, None, 0.0)]
    recs += [IterationRecord(t, Model(thetas[t]), P, s, 0.0) for t, s in enumerate(steps, start=1)]
    return ReciprocalPath(recs, [], AdaptationConfig(), len(steps))


class TestPseudoLabel:
    def test_zero_parameter(self):
        assert pseudo_label(np.zeros(2), (0.3, 0.9)) == 0.5

    def test_monotone_to_one(self):
        values = [pseudo_label((s, 0.0), (1.0, 0.0)) for s in range(0, 40, 4)]
        assert all(a < b for a, b in zip(values, values[1:-1]))
        assert values[-1] == pytest.approx(1.0, abs=1e-15)

    def test_value(self):
        assert pseudo_label(Model([1.0, 1.0]), (0.5, 0.5)) == pytest.approx(0.7310585786300049, abs=1e-15)


class TestSelection:
    def test_argmax_at_zero_temperature(self):
        pool = [Instance(0.5, (0.1, 0.1)), Instance(0.5, (0.9, 0.9)), Instance(0.5, (0.5, 0.1))]
        assert select_candidates((2.0, 2.0), pool, 1, 0.0) == [1]

    def test_ties_by_index(self):
        pool = [Instance(0.5, (0.5, 0.5))] * 4
        assert select_candidates(np.zeros(2), pool, 2, 0.0) == [0, 1]

    def test_zero_parameter_uniform(self):
        pool = pool_points(np.random.default_rng(0), 5)
        counts = np.bincount([select_candidates(np.zeros(2), pool, 1, 0.05, seed=s)[0] for s in range(5000)], minlength=5)
        # chi-square against uniform, 4 degrees of freedom, 0.1% critical value 18.47
        chi2 = np.sum((counts - 1000) ** 2 / 1000)
        assert chi2 < 18.47

    def test_seeded_determinism(self):
        pool = pool_points(np.random.default_rng(1), 30)
        a = select_candidates((1.0, -2.0), pool, 4, 0.1, seed=9)
        assert a == select_candidates((1.0, -2.0), pool, 4, 0.1, seed=9)
        assert len(set(a)) == 4

    def test_pool_too_small(self):
        with pytest.raises(ConfigError):
            select_candidates(np.zeros(2), pool_points(np.random.default_rng(0), 2), 3, 0.1)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            AdaptationConfig(mode="boost")
        with pytest.raises(ConfigError):
            AdaptationConfig(m=0)
        with pytest.raises(ConfigError):
            AdaptationConfig(selection_temperature=-1)
        with pytest.raises(ConfigError):
            AdaptationConfig(replace_policy="newest")


class TestAdaptSample:
    def setup_method(self):
        rng = np.random.default_rng(2)
        self.P = make_empirical(labeled_points(rng, 4))
        self.pool = pool_points(rng, 10)
        self.theta = erm(self.P, RIDGE)

    def test_greedy_renormalizes(self):
        Q, pool = adapt_sample(self.theta, self.P, self.pool, AdaptationConfig("greedy_add", 1))
        assert len(Q) == 5
        np.testing.assert_allclose(Q.weights, 0.2)
        assert len(pool) == 9
        assert Q.points[:4] == self.P.points
        assert Q.points[4].pseudo

    def test_nongreedy_changes_one_atom(self):
        Q, _ = adapt_sample(self.theta, self.P, self.pool, AdaptationConfig("nongreedy_replace", 1))
        assert len(Q) == 4
        assert len(set(Q.points) - set(self.P.points)) == 1

    def test_selected_point_leaves_pool(self):
        Q, pool = adapt_sample(self.theta, self.P, self.pool, AdaptationConfig("greedy_add", 3))
        new_x = {inst.x for inst in Q.points[4:]}
        assert new_x.isdisjoint({inst.x for inst in pool})
        assert len(pool) == 7

    @pytest.mark.parametrize("mode,m", [("greedy_add", 1), ("greedy_add", 2), ("nongreedy_replace", 1), ("nongreedy_replace", 3)])
    @pytest.mark.parametrize("p", [1.0, 1.4])
    def test_step_cap(self, mode, m, p):
        space = SPACE.with_p(p)
        Q, _ = adapt_sample(self.theta, self.P, self.pool, AdaptationConfig(mode, m, seed=5))
        w = wasserstein_distance(self.P, Q, space)
        assert w <= (m / len(self.P)) ** (1 / p) * D_Z + 1e-12

    def test_soft_labels(self):
        Q, _ = adapt_sample(self.theta, self.P, self.pool, AdaptationConfig("greedy_add", 1))
        new = Q.points[-1]
        assert new.y == pytest.approx(pseudo_label(self.theta, new.x), abs=0)

    def test_oldest_pseudo_replaced_first(self):
        cfg = AdaptationConfig("nongreedy_replace", 1, selection_temperature=0.0)
        Q1, pool = adapt_sample(self.theta, self.P, self.pool, cfg, step=1)
        # no pseudo points yet: the oldest labeled point goes
        assert Q1.points[:3] == self.P.points[1:]
        Q2, _ = adapt_sample(self.theta, Q1, pool, cfg, step=2)
        assert Q2.points[:3] == Q1.points[:3]
        assert sum(i.pseudo for i in Q2.points) == 1

    def test_random_policy_reproducible(self):
        cfg = AdaptationConfig("nongreedy_replace", 2, replace_policy="random_seeded", seed=4)
        a = adapt_sample(self.theta, self.P, self.pool, cfg, step=3)
        b = adapt_sample(self.theta, self.P, self.pool, cfg, step=3)
        assert a == b

    def test_empty_pool(self):
        with pytest.raises(ConfigError, match="empty"):
            adapt_sample(self.theta, self.P, [], AdaptationConfig())

    def test_replacement_larger_than_sample(self):
        with pytest.raises(ConfigError):
            adapt_sample(self.theta, self.P, self.pool, AdaptationConfig("nongreedy_replace", 5))


class TestRun:
    def test_zero_horizon(self):
        rng = np.random.default_rng(0)
        labeled = labeled_points(rng, 8)
        path = run_reciprocal(labeled, pool_points(rng, 4), 0, RIDGE, AdaptationConfig())
        assert len(path.iterations) == 1
        assert path.iterations[0].theta == erm(make_empirical(labeled), RIDGE)
        assert path.iterations[0].step_wasserstein is None

    def test_pool_exhaustion(self):
        rng = np.random.default_rng(1)
        path = run_reciprocal(labeled_points(rng, 5), pool_points(rng, 3), 10, RIDGE, AdaptationConfig())
        assert path.horizon == 3
        assert path.status == "pool_exhausted"
        assert path.pool_remaining == []

    def test_nongreedy_step_cap(self):
        rng = np.random.default_rng(2)
        path = run_reciprocal(
            labeled_points(rng, 20), pool_points(rng, 30), 15, RIDGE, AdaptationConfig("nongreedy_replace", 1, seed=3)
        )
        assert path.horizon == 15
        assert all(s <= D_Z / 20 + 1e-12 for s in path.step_distances)
        assert all(len(r.sample) == 20 for r in path.iterations)

    def test_greedy_growth(self):
        rng = np.random.default_rng(3)
        path = run_reciprocal(labeled_points(rng, 6), pool_points(rng, 20), 5, RIDGE, AdaptationConfig("greedy_add", 2))
        assert [len(r.sample) for r in path.iterations] == [6 + 2 * t for t in range(6)]

    def test_theta_in_box(self):
        rng = np.random.default_rng(4)
        path = run_reciprocal(labeled_points(rng, 6), pool_points(rng, 10), 6, LossSpec(SPACE), AdaptationConfig())
        for rec in path.iterations:
            assert np.all(np.abs(rec.theta.theta) <= 5)

    def test_deterministic(self):
        def go():
            rng = np.random.default_rng(5)
            return run_reciprocal(
                labeled_points(rng, 10), pool_points(rng, 20), 8, RIDGE, AdaptationConfig("nongreedy_replace", 2, seed=8)
            ).to_jsonl()

        assert go() == go()

    def test_negative_horizon(self):
        with pytest.raises(ConfigError):
            run_reciprocal(labeled_points(np.random.default_rng(0), 3), [], -1, RIDGE, AdaptationConfig())


class TestLipschitzEstimate:
    def test_constant_path(self):
        with pytest.raises(ConfigError):
            estimate_ls(synthetic_path([0.0, 0.0, 0.0]))

    def test_geometric_path(self):
        assert estimate_ls(synthetic_path([1.0, 0.5, 0.25, 0.125])) == 0.5

    def test_skips_zero_denominators(self):
        assert contraction_ratio([0.0, 0.2, 0.1, 0.09]) == pytest.approx(0.9)

    def test_greedy_run_reports_against_theory(self):
        rng = np.random.default_rng(6)
        n = 15
        path = run_reciprocal(labeled_points(rng, n), pool_points(rng, 20), 12, RIDGE, AdaptationConfig(seed=2))
        estimate = estimate_ls(path)
        assert math.isfinite(estimate) and estimate > 0
        # the empirical witness is a ratio of exact distances, independently recomputed here
        steps = [wasserstein_distance(a.sample, b.sample, SPACE) for a, b in zip(path.iterations, path.iterations[1:])]
        assert estimate == pytest.approx(max(b / a for a, b in zip(steps, steps[1:])), rel=1e-12)


class TestConvergence:
    def test_constant_path(self):
        assert detect_convergence(synthetic_path([0.0, 0.0]), 1e-9) == 1

    def test_diverging_path(self):
        thetas = [np.array([t, 0.0]) for t in range(5)]
        assert detect_convergence(synthetic_path([1.0, 2.0, 3.0, 4.0], thetas), 1e-3) is None

    def test_bad_tol(self):
        with pytest.raises(ConfigError):
            detect_convergence(synthetic_path([0.0]), 0)

    def test_contracting_self_training(self):
        # a pool of identical points: replacements only move soft labels, which settle
        def go():
            rng = np.random.default_rng(0)
            labeled = labeled_points(rng, 10)
            pool = [Instance(0.5, (0.8, 0.3))] * 40
            cfg = AdaptationConfig("nongreedy_replace", 1, seed=1)
            return run_reciprocal(labeled, pool, 30, LossSpec(SPACE, "ridge_logistic", 1.0), cfg)

        path = go()
        index = detect_convergence(path, 1e-6)
        assert index is not None and index < 10
        assert detect_convergence(go(), 1e-6) == index
        assert estimate_ls(path) < 0.1
