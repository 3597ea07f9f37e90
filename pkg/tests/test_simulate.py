#!/usr/bin/env python3
"""Tests for path simulation, Radon-Nikodym weights and Monte Carlo estimators."""

import math
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
from scipy import stats

# Add scripts to path
sys.path.insert(0, str(Path(__file__).parent.parent / "skills" / "jump-diffusion" / "scripts"))

from test_fixtures import frozen_model, load_sample_model, three_regime_model, two_state_closed_form

from descriptors import ONE, ZERO, Constant, PiecewiseConstant, PowerLaw
from measures import esscher_transform
from model import InvariantViolation, MeasureChangeSpec, PreconditionError, apply_girsanov, constant_model
from simulate import (
    Functional, SwitchLimitError, brownian_increments, entropy_integrand, mc_expectation,
    mc_weighted_expectation, path_generator, path_rng, radon_nikodym_weight,
    sample_holding, simulate_path, write_estimates_csv, write_paths_csv,
)
from volterra import constant_entropy_coefficients

SEED = 20160907


class TestRandomStreams(unittest.TestCase):
    """Tests for per-path Philox streams."""

    def test_same_key_same_numbers(self):
        a = path_rng(SEED, 3).standard_normal(5)
        b = path_rng(SEED, 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_paths_independent_of_batching(self):
        spec = load_sample_model("semi_markov")
        whole = list(path_generator(spec, 0, 1.0, 0.25, SEED, 6))
        tail = list(path_generator(spec, 0, 1.0, 0.25, SEED, 3, start=3))
        for p, q in zip(whole[3:], tail):
            np.testing.assert_array_equal(p.X, q.X)

    def test_different_paths_differ(self):
        self.assertNotEqual(path_rng(SEED, 0).random(), path_rng(SEED, 1).random())


class TestHoldingTimes(unittest.TestCase):
    """Tests for competing-risks holding times."""

    def test_exponential_marginal(self):
        spec = load_sample_model("figure_one")
        rng = path_rng(SEED, 0)
        draws = [sample_holding(spec, 0, rng).time for _ in range(2000)]
        self.assertGreater(stats.kstest(draws, "expon", args=(0, 1.0)).pvalue, 1e-3)

    def test_piecewise_marginal(self):
        spec = load_sample_model("semi_markov")
        rng = path_rng(SEED, 1)
        draws = np.array([sample_holding(spec, 0, rng).time for _ in range(2000)])

        def cdf(t):
            t = np.asarray(t)
            gamma = np.where(t < 0.5, 0.5 * t, 0.25 + 2.0 * (t - 0.5))
            return 1.0 - np.exp(-gamma)

        self.assertGreater(stats.kstest(draws, cdf).pvalue, 1e-3)

    def test_power_law_marginal(self):
        weibull = load_sample_model("weibull")
        cases = (
            ("weibull", weibull, 0, lambda t: 1.0 - np.exp(-np.asarray(t) ** 2)),
            ("three_regime", three_regime_model(), 2, lambda t: 1.0 - np.exp(-np.asarray(t) ** 1.5 / 1.5)),
        )
        for name, spec, regime, cdf in cases:
            with self.subTest(model=name):
                rng = path_rng(SEED, 4)
                draws = np.array([sample_holding(spec, regime, rng).time for _ in range(2000)])
                self.assertGreater(stats.kstest(draws, cdf).pvalue, 1e-3)

    def test_competing_targets(self):
        spec = three_regime_model()
        rng = path_rng(SEED, 2)
        targets = np.array([sample_holding(spec, 0, rng).target for _ in range(4000)])
        share = np.mean(targets == 2)
        self.assertLess(abs(share - 0.75), 4.0 * math.sqrt(0.75 * 0.25 / 4000))

    def test_censoring(self):
        spec = frozen_model()
        hold = sample_holding(spec, 0, path_rng(SEED, 0), horizon=2.0)
        self.assertTrue(hold.censored)
        self.assertEqual(hold.target, -1)
        self.assertEqual(hold.time, 2.0)


class TestPaths(unittest.TestCase):
    """Tests for the path structure."""

    def test_path_structure(self):
        spec = load_sample_model("semi_markov")
        path = simulate_path(spec, 0, 3.0, 0.01, path_rng(SEED, 5))
        self.assertEqual(path.grid[0], 0.0)
        self.assertAlmostEqual(path.grid[-1], 3.0)
        self.assertEqual(path.X[0], 0.0)
        self.assertTrue(np.all(np.diff(path.switch_times) > 0))
        self.assertEqual(len(path.regimes), len(path.switch_times))
        self.assertEqual(len(path.jump_sizes), len(path.switch_times) - 1)
        self.assertAlmostEqual(path.Nh[-1], float(np.sum(path.jump_sizes)))
        np.testing.assert_array_equal(path.regimes[1:], 1 - path.regimes[:-1])

    def test_jumps_follow_prior_regime(self):
        spec = load_sample_model("semi_markov")
        path = simulate_path(spec, 0, 5.0, 0.05, path_rng(SEED, 6))
        for k, jump in enumerate(path.jump_sizes):
            self.assertEqual(jump, 0.5 if path.regimes[k] == 0 else -0.2)

    def test_drift_integrates_regime_by_regime(self):
        spec = load_sample_model("telegraph")
        path = simulate_path(spec, 1, 4.0, 0.1, path_rng(SEED, 7))
        c = np.array([1.0, -1.0])
        times = np.append(path.switch_times, 4.0)
        expected = float(np.sum(c[path.regimes] * np.diff(times)))
        self.assertAlmostEqual(path.Tc[-1], expected, places=10)
        np.testing.assert_array_equal(path.Wsigma, 0.0)

    def test_frozen_path_is_linear_drift(self):
        spec = frozen_model(c=0.7, sigma=0.0)
        path = simulate_path(spec, 0, 2.0, 0.25, path_rng(SEED, 8))
        np.testing.assert_allclose(path.X, 0.7 * path.grid, atol=1e-12)
        self.assertEqual(path.first_switch, math.inf)
        self.assertEqual(path.count_at(2.0), 0)

    def test_queries(self):
        spec = load_sample_model("semi_markov")
        path = simulate_path(spec, 0, 2.0, 0.5, path_rng(SEED, 9))
        self.assertEqual(path.value_at(1.0), path.X[2])
        with self.assertRaises(PreconditionError):
            path.value_at(0.3)
        self.assertEqual(path.regime_at(0.0), 0)

    def test_switch_limit(self):
        spec = constant_model((1e6, 1e6), (0.0, 0.0), (1.0, -1.0), (0.0, 0.0))
        with self.assertRaises(SwitchLimitError):
            simulate_path(spec, 0, 1.0, 0.5, path_rng(SEED, 0), switch_limit=50)

    def test_rejects_bad_arguments(self):
        spec = load_sample_model("figure_one")
        with self.assertRaises(PreconditionError):
            simulate_path(spec, 2, 1.0, 0.1, path_rng(SEED, 0))
        with self.assertRaises(PreconditionError):
            simulate_path(spec, 0, 0.0, 0.1, path_rng(SEED, 0))


class TestMonteCarlo(unittest.TestCase):
    """Tests for estimators against closed forms."""

    def assertWithin(self, est, reference, k=4.0):
        self.assertLessEqual(abs(est.estimate - reference), k * est.std_error + 1e-12,
                             f"{est.estimate} +- {est.std_error} vs {reference}")

    def test_terminal_x_markov(self):
        lam, c, h, sigma = (1.0, 2.0), (0.5, -1.0), (1.0, -0.5), (0.5, 0.8)
        spec = constant_model(lam, c, h, sigma)
        est = mc_expectation(spec, 0, Functional.TERMINAL_X, 1.5, 4000, SEED)
        self.assertEqual(est.n_paths, 4000)
        self.assertWithin(est, two_state_closed_form(lam, c, h, 1.5)[0])

    def test_no_switch_probability(self):
        spec = load_sample_model("semi_markov")
        est = mc_expectation(spec, 0, Functional.NO_SWITCH, 1.0, 4000, SEED)
        self.assertWithin(est, math.exp(-1.25))

    def test_switch_count_markov(self):
        spec = constant_model((1.0, 1.0), (0.0, 0.0), (0.0, 0.0), (1.0, 1.0))
        est = mc_expectation(spec, 0, Functional.SWITCH_COUNT, 2.0, 4000, SEED)
        self.assertWithin(est, 2.0)

    def test_diffusion_variance(self):
        spec = frozen_model(c=0.0, sigma=2.0)
        values = np.array([p.X[-1] for p in path_generator(spec, 0, 1.0, 1.0, SEED, 4000)])
        self.assertLess(abs(values.var(ddof=1) - 4.0), 0.5)

    def test_needs_enough_paths(self):
        spec = load_sample_model("figure_one")
        with self.assertRaises(PreconditionError):
            mc_expectation(spec, 0, Functional.ONE, 1.0, 10, SEED)


class TestRadonNikodym(unittest.TestCase):
    """Tests for weights of P-paths."""

    def setUp(self):
        self.spec = load_sample_model("figure_one")
        self.change = MeasureChangeSpec((Constant(-0.5), Constant(0.25)),
                                        (Constant(0.5), Constant(-0.25)),
                                        (Constant(0.3), Constant(-0.4)))

    def test_identity_weight(self):
        path = simulate_path(self.spec, 0, 1.0, 0.5, path_rng(SEED, 0))
        sample = radon_nikodym_weight(path, self.spec, MeasureChangeSpec.identity(2), 1.0)
        self.assertEqual(sample.weight, 1.0)
        self.assertEqual(sample.log_weight, 0.0)

    def test_weight_has_unit_mean(self):
        est = mc_weighted_expectation(self.spec, self.change, 0, Functional.ONE, 1.0, 4000, SEED)
        self.assertLessEqual(abs(est.estimate - 1.0), 4.0 * est.std_error)

    def test_weighted_mean_matches_q_model(self):
        # Q-model: c^Q = c + sigma sigma*, lambda^Q = lambda (1 + h*)
        est = mc_weighted_expectation(self.spec, self.change, 0, Functional.TERMINAL_X, 1.0, 4000, SEED)
        reference = two_state_closed_form((1.5, 0.75), (-0.7, 2.6), (1.0, -0.1), 1.0)[0]
        self.assertLessEqual(abs(est.estimate - reference), 4.0 * est.std_error)

    def test_weight_matches_log_formula_without_diffusion(self):
        change = MeasureChangeSpec((Constant(-0.5), Constant(0.25)),
                                   (Constant(0.5), Constant(-0.25)), (ZERO, ZERO))
        path = simulate_path(self.spec, 0, 2.0, 0.5, path_rng(SEED, 11))
        expected = 0.0
        times = np.append(path.switch_times, 2.0)
        for k, regime in enumerate(path.regimes):
            expected += [-0.5, 0.25][regime] * (times[k + 1] - times[k])
        for k in range(len(path.jump_sizes)):
            expected += math.log([1.5, 0.75][path.regimes[k]])
        sample = radon_nikodym_weight(path, self.spec, change, 2.0)
        self.assertAlmostEqual(sample.log_weight, expected, places=10)

    def test_rejects_invalid_change(self):
        bad = MeasureChangeSpec((ZERO, ZERO), (Constant(0.5), ZERO), (ZERO, ZERO))
        with self.assertRaises(InvariantViolation):
            mc_weighted_expectation(self.spec, bad, 0, Functional.ONE, 1.0, 200, SEED)

    def test_time_outside_path(self):
        path = simulate_path(self.spec, 0, 1.0, 0.5, path_rng(SEED, 0))
        with self.assertRaises(PreconditionError):
            radon_nikodym_weight(path, self.spec, self.change, 1.5)

    def test_esscher_martingale(self):
        spec = constant_model((1.0, 1.0), (-0.8, 0.3), (1.0, -0.1), (1.0, 1.0))
        _, change = esscher_transform(spec, horizon=1.0)
        est = mc_weighted_expectation(spec, change, 1, Functional.TERMINAL_X, 1.0, 4000, SEED)
        self.assertLessEqual(abs(est.estimate), 4.0 * est.std_error)

    def test_entropy_integrand_for_diffusion_change(self):
        spec = frozen_model(c=0.0, sigma=1.0)
        change = MeasureChangeSpec((ZERO, ZERO), (ZERO, ZERO), (Constant(2.0), ZERO))
        path = simulate_path(spec, 0, 1.5, 0.5, path_rng(SEED, 3))
        self.assertAlmostEqual(entropy_integrand(path, change, 1.5), 0.5 * 4.0 * 1.5)

    def test_power_law_sigma_star_needs_tilt(self):
        change = MeasureChangeSpec((ZERO, ZERO), (ZERO, ZERO), (PowerLaw(1.0, 1.0), ZERO))
        path = simulate_path(self.spec, 0, 1.0, 0.5, path_rng(SEED, 0))
        with self.assertRaises(PreconditionError):
            radon_nikodym_weight(path, self.spec, change, 1.0)
        tilted = simulate_path(self.spec, 0, 1.0, 0.5, path_rng(SEED, 0), tilt=change.sigma_star)
        self.assertTrue(math.isfinite(radon_nikodym_weight(tilted, self.spec, change, 1.0).log_weight))

    def test_step_tilt_leaves_path_and_weight_unchanged(self):
        plain = simulate_path(self.spec, 0, 2.0, 0.25, path_rng(SEED, 12))
        tilted = simulate_path(self.spec, 0, 2.0, 0.25, path_rng(SEED, 12), tilt=self.change.sigma_star)
        np.testing.assert_array_equal(plain.X, tilted.X)
        self.assertAlmostEqual(radon_nikodym_weight(plain, self.spec, self.change, 2.0).log_weight,
                               radon_nikodym_weight(tilted, self.spec, self.change, 2.0).log_weight, places=12)

    def test_rejects_tilt_of_wrong_length(self):
        with self.assertRaises(PreconditionError):
            simulate_path(self.spec, 0, 1.0, 0.5, path_rng(SEED, 0), tilt=(ZERO,))


class TestBrownianIncrements(unittest.TestCase):
    """Tests for jointly sampled stochastic integrals over one interval."""

    def test_step_integrands_share_one_normal(self):
        u0, u1 = np.array([0.0, 0.5]), np.array([0.5, 1.25])
        incr = brownian_increments([ONE, Constant(2.0), Constant(-0.5)], u0, u1, path_rng(SEED, 0))
        np.testing.assert_allclose(incr[:, 1], 2.0 * incr[:, 0])
        np.testing.assert_allclose(incr[:, 2], -0.5 * incr[:, 0])

    def test_power_law_covariance(self):
        n, t = 20000, 1.5
        u0, u1 = np.zeros(n), np.full(n, t)
        incr = brownian_increments([ONE, Constant(1.0), PowerLaw(1.0, 1.0)], u0, u1, path_rng(SEED, 1))
        # int 1 = t, int u = t^2/2, int u^2 = t^3/3
        gram = np.array([[t, t, t ** 2 / 2],
                         [t, t, t ** 2 / 2],
                         [t ** 2 / 2, t ** 2 / 2, t ** 3 / 3]])
        np.testing.assert_allclose(np.cov(incr, rowvar=False), gram, atol=0.08)
        np.testing.assert_allclose(incr[:, 0], incr[:, 1], atol=1e-6)

    def test_zero_length_interval(self):
        incr = brownian_increments([ONE, PowerLaw(1.0, 0.5)], np.array([0.3]), np.array([0.3]),
                                   path_rng(SEED, 2))
        np.testing.assert_allclose(incr, 0.0, atol=1e-12)


class TestGirsanovConsistency(unittest.TestCase):
    """Weighted P-paths against Q-paths and closed forms."""

    T = 1.0
    N = 4000

    def setUp(self):
        self.constant_case = (
            load_sample_model("figure_one"),
            MeasureChangeSpec((Constant(-0.5), Constant(0.25)),
                              (Constant(0.5), Constant(-0.25)),
                              (Constant(0.3), Constant(-0.4))),
        )
        # semi-Markov P; h* switches value at elapsed time 0.5, c* = -gamma h*
        self.varying_case = (
            load_sample_model("semi_markov"),
            MeasureChangeSpec((PiecewiseConstant((0.0, 0.5), (-0.2, 0.6)), Constant(-0.3)),
                              (PiecewiseConstant((0.0, 0.5), (0.4, -0.3)), Constant(0.2)),
                              (PowerLaw(0.5, 1.0), Constant(-0.2))),
        )

    def assertAgree(self, a, b, k=3.0):
        combined = math.sqrt(a.std_error ** 2 + b.std_error ** 2)
        self.assertLessEqual(abs(a.estimate - b.estimate), k * combined + 1e-12,
                             f"{a.estimate} +- {a.std_error} vs {b.estimate} +- {b.std_error}")

    def test_weighted_p_matches_direct_q(self):
        for name, (spec, change) in (("constant", self.constant_case), ("varying", self.varying_case)):
            spec_Q = apply_girsanov(spec, change, horizon=self.T)
            for functional in (Functional.TERMINAL_X, Functional.SWITCH_COUNT, Functional.NO_SWITCH):
                with self.subTest(change=name, functional=functional.value):
                    weighted = mc_weighted_expectation(spec, change, 0, functional, self.T, self.N, SEED)
                    direct = mc_expectation(spec_Q, 0, functional, self.T, self.N, SEED + 1)
                    self.assertAgree(weighted, direct)

    def test_no_switch_is_q_survival(self):
        spec, change = self.varying_case
        est = mc_weighted_expectation(spec, change, 0, Functional.NO_SWITCH, self.T, self.N, SEED)
        # gamma^Q_0 = 0.5 * 1.4 on [0, 0.5), 2.0 * 0.7 after
        survival = math.exp(-(0.7 * 0.5 + 1.4 * 0.5))
        self.assertLessEqual(abs(est.estimate - survival), 4.0 * est.std_error)

    def test_power_law_tilt_has_unit_mean(self):
        spec = constant_model((0.01, 0.01), (0.0, 0.0), (0.0, 0.0), (1.0, 1.0))
        change = MeasureChangeSpec((ZERO, ZERO), (ZERO, ZERO), (PowerLaw(1.0, 1.0), PowerLaw(1.0, 1.0)))
        est = mc_weighted_expectation(spec, change, 0, Functional.ONE, 1.5, 8000, SEED)
        self.assertLessEqual(abs(est.estimate - 1.0), 4.0 * est.std_error)

    def test_relative_entropy_from_weights(self):
        spec, change = self.constant_case
        values = []
        for path in path_generator(spec, 0, self.T, self.T, SEED, self.N, tilt=change.sigma_star):
            sample = radon_nikodym_weight(path, spec, change, self.T)
            values.append(sample.weight * sample.log_weight)
        values = np.asarray(values)
        estimate, std_error = values.mean(), values.std(ddof=1) / math.sqrt(len(values))
        H = constant_entropy_coefficients(spec, change).entropy(self.T)[0]
        self.assertGreater(H, 0.0)
        self.assertGreaterEqual(estimate, 0.0)
        self.assertLessEqual(abs(estimate - H), 4.0 * std_error)


class TestCsv(unittest.TestCase):
    """Tests for CSV output."""

    def test_paths_csv(self):
        spec = load_sample_model("semi_markov")
        paths = list(path_generator(spec, 0, 1.0, 0.25, SEED, 2))
        with tempfile.TemporaryDirectory() as tmp:
            out = write_paths_csv(paths, Path(tmp) / "paths.csv")
            lines = out.read_text().splitlines()
        self.assertEqual(lines[0], "path_id,t,regime,Tc,Nh,Wsigma,X")
        self.assertEqual(len(lines), 1 + 2 * 5)

    def test_estimates_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = write_estimates_csv([(1.0, 0.5, 0.01, 100)], Path(tmp) / "est.csv")
            data = np.loadtxt(out, delimiter=",", skiprows=1)
        np.testing.assert_allclose(data, [1.0, 0.5, 0.01, 100])


if __name__ == "__main__":
    unittest.main()
