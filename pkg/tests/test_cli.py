#!/usr/bin/env python3
"""Tests for the batch CLI: commands, outputs and exit codes."""

import io
import json
import os
import sys
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path
from unittest.mock import patch

import numpy as np

# Add scripts to path
sys.path.insert(0, str(Path(__file__).parent.parent / "skills" / "jump-diffusion" / "scripts"))

from test_fixtures import get_sample_model, write_json

import cli
from config import ENV_VAR, get_data_dir
from model import check_martingale_condition, load_change, load_model


class CliTestCase(unittest.TestCase):
    """Temp workspace plus a helper that runs one command and captures stdout."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def invoke(self, command, config=None, **flags):
        config_file = None
        if config is not None:
            config_file = str(write_json(self.tmp, "run.json", config))
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = cli.run(command, config_file, flags)
        return code, buf.getvalue()

    def model_file(self, name):
        return write_json(self.tmp, f"{name}.json", get_sample_model(name)).name


class TestRunConfig(unittest.TestCase):
    """Tests for run-config merging."""

    def test_defaults(self):
        cfg = cli.RunConfig.from_sources("memm", {}, {})
        self.assertEqual(cfg.horizon, 1.0)
        self.assertAlmostEqual(cfg.step, 1.0 / 2048)
        self.assertIsNone(cfg.out)

    def test_flags_override_config(self):
        cfg = cli.RunConfig.from_sources("entropy", {"horizon": 2.0, "seed": 5},
                                         {"horizon": 3.0, "seed": None, "quiet": True})
        self.assertEqual(cfg.horizon, 3.0)
        self.assertEqual(cfg.seed, 5)
        self.assertTrue(cfg.quiet)
        self.assertNotIn("quiet", cfg.raw)

    def test_rejects_bad_values(self):
        with self.assertRaises(cli.ConfigError):
            cli.RunConfig.from_sources("memm", {"horizon": -1.0}, {})
        with self.assertRaises(cli.ConfigError):
            cli.RunConfig.from_sources("memm", {"step": -0.1}, {})
        with self.assertRaises(cli.ConfigError):
            cli.RunConfig.from_sources("expectation", {"paths": 10}, {})
        # path count only matters for Monte Carlo commands
        cli.RunConfig.from_sources("simulate", {"paths": 10}, {})

    def test_rejects_mistyped_values(self):
        for config in ({"horizon": "abc"}, {"paths": 2.5}, {"seed": True}, {"tol": [1e-8]}):
            with self.subTest(config=config):
                with self.assertRaises(cli.ConfigError):
                    cli.RunConfig.from_sources("expectation", config, {})

    def test_integral_float_accepted_for_count(self):
        cfg = cli.RunConfig.from_sources("expectation", {"paths": 2000.0}, {})
        self.assertEqual(cfg.n_paths, 2000)
        self.assertIsInstance(cfg.n_paths, int)


class TestExitCodes(CliTestCase):
    """Tests for the 0 / 1 / 2 exit-code contract."""

    def test_validate_ok(self):
        code, out = self.invoke("validate", {"model": self.model_file("figure_one")})
        self.assertEqual(code, 0)
        self.assertIn("[OK]", out)

    def test_validate_failure_writes_report(self):
        report = self.tmp / "report.json"
        code, out = self.invoke("validate", {"model": self.model_file("negative_rate")}, out=str(report))
        self.assertEqual(code, 1)
        self.assertIn("[ERROR]", out)
        self.assertIn("hazard 0->1", out)
        data = json.loads(report.read_text())
        self.assertFalse(data["ok"])
        self.assertTrue(data["violations"])

    def test_validate_with_change(self):
        change = {"regimes": [{"h_star": -1.5}, {}]}
        code, out = self.invoke("validate", {"model": self.model_file("figure_one"), "change": change})
        self.assertEqual(code, 1)

    def test_unknown_command(self):
        code, out = self.invoke("plot")
        self.assertEqual(code, 2)
        self.assertIn("unknown command", out)

    def test_missing_config_file(self):
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = cli.run("validate", str(self.tmp / "absent.json"))
        self.assertEqual(code, 2)

    def test_missing_model_file(self):
        code, _ = self.invoke("validate", {"model": "absent_model.json"})
        self.assertEqual(code, 2)

    def test_bad_json(self):
        bad = self.tmp / "bad.json"
        bad.write_text("{not json")
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = cli.run("validate", str(bad))
        self.assertEqual(code, 2)

    def test_config_must_be_object(self):
        listed = self.tmp / "list.json"
        listed.write_text("[1, 2]")
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = cli.run("validate", str(listed))
        self.assertEqual(code, 2)

    def test_missing_model_entry(self):
        code, out = self.invoke("validate", {})
        self.assertEqual(code, 2)
        self.assertIn("'model'", out)

    def test_malformed_model(self):
        code, _ = self.invoke("validate", {"model": {"regimes": []}})
        self.assertEqual(code, 2)

    def test_unknown_preset(self):
        code, _ = self.invoke("esscher", {"preset": "figure_two"})
        self.assertEqual(code, 2)

    def test_too_few_paths(self):
        code, _ = self.invoke("expectation", {"preset": "figure_one"}, paths=5)
        self.assertEqual(code, 2)

    def test_mistyped_problem_value(self):
        problem = {"lambda": [1, "one"], "c": [-1, 3], "h": [1, -0.1], "sigma": [1, 1]}
        code, out = self.invoke("memm", {"problem": problem}, variant="short")
        self.assertEqual(code, 2)
        self.assertIn("[ERROR] Input:", out)

    def test_initial_state_out_of_range(self):
        code, out = self.invoke("memm", {"preset": "figure_one", "initial_state": 5},
                                variant="horizon", out=str(self.tmp / "h.json"))
        self.assertEqual(code, 2)
        self.assertIn("initial_state", out)
        code, _ = self.invoke("simulate", {"preset": "figure_one", "initial_state": -1},
                              out=str(self.tmp / "p.csv"))
        self.assertEqual(code, 2)

    def test_mistyped_check_times(self):
        code, _ = self.invoke("expectation", {"preset": "figure_one", "check_times": "0.5"},
                              paths=200, out=str(self.tmp / "mu.csv"))
        self.assertEqual(code, 2)

    def test_rejection_and_input_tags_differ(self):
        _, rejected = self.invoke("validate", {"model": self.model_file("negative_rate")})
        _, unreadable = self.invoke("validate", {"model": "absent_model.json"})
        self.assertIn("[ERROR] Rejected:", rejected)
        self.assertIn("[ERROR] Input:", unreadable)

    def test_unexpected_value_error_propagates(self):
        def broken(cfg):
            raise ValueError("not an input problem")
        with patch.dict(cli.HANDLERS, {"validate": broken}):
            with redirect_stdout(io.StringIO()):
                with self.assertRaises(ValueError):
                    cli.run("validate", None, {})


class TestMeasureCommands(CliTestCase):
    """Tests for esscher, girsanov and telegraph-measure."""

    def test_esscher_then_girsanov(self):
        change_path = self.tmp / "esscher.json"
        code, _ = self.invoke("esscher", {"preset": "figure_one"}, out=str(change_path))
        self.assertEqual(code, 0)
        change = load_change(change_path)
        self.assertAlmostEqual(change.sigma_star[1].value, -2.9)

        q_path = self.tmp / "model_Q.json"
        code, _ = self.invoke("girsanov", {"preset": "figure_one", "change": change_path.name},
                              out=str(q_path))
        self.assertEqual(code, 0)
        spec_Q = load_model(q_path)
        self.assertEqual(spec_Q.measure_label, "Q")
        self.assertTrue(check_martingale_condition(spec_Q, 1.0, tol=1e-12).ok)

    def test_esscher_needs_diffusion(self):
        code, out = self.invoke("esscher", {"model": self.model_file("telegraph")})
        self.assertEqual(code, 1)
        self.assertIn("[ERROR]", out)

    def test_girsanov_rejects_invalid_change(self):
        change = {"regimes": [{"h_star": -2.0}, {}]}
        code, _ = self.invoke("girsanov", {"preset": "figure_one", "change": change},
                              out=str(self.tmp / "q.json"))
        self.assertEqual(code, 1)

    def test_telegraph(self):
        out_path = self.tmp / "tele.json"
        code, _ = self.invoke("telegraph-measure", {"model": self.model_file("telegraph")}, out=str(out_path))
        self.assertEqual(code, 0)
        change = load_change(out_path)
        self.assertAlmostEqual(change.h_star[0].value, -0.5)

    def test_telegraph_without_measure(self):
        code, out = self.invoke("telegraph-measure", {"model": self.model_file("telegraph_no_measure")},
                                out=str(self.tmp / "tele.json"))
        self.assertEqual(code, 1)
        self.assertIn("no martingale measure", out)
        self.assertFalse((self.tmp / "tele.json").exists())


class TestMemmCommands(CliTestCase):
    """Tests for memm, levy and figures."""

    def test_short(self):
        out_path = self.tmp / "short.json"
        code, out = self.invoke("memm", {"preset": "figure_one"}, variant="short", out=str(out_path))
        self.assertEqual(code, 0)
        self.assertIn("[STATS]", out)
        data = json.loads(out_path.read_text())
        self.assertEqual(data["kind"], "short_term")
        self.assertAlmostEqual(data["lambda_star"][0], 1.0)

    def test_long_from_inline_problem(self):
        problem = {"lambda": [1, 1], "c": [-1, 3], "h": [1, -0.1], "sigma": [1, 1]}
        out_path = self.tmp / "long.json"
        code, _ = self.invoke("memm", {"problem": problem}, variant="long", out=str(out_path))
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out_path.read_text())["kind"], "long_term")

    def test_variant_from_config(self):
        out_path = self.tmp / "long.json"
        code, _ = self.invoke("memm", {"preset": "figure_one", "variant": "long"}, out=str(out_path))
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out_path.read_text())["kind"], "long_term")

    def test_horizon_both_states(self):
        out_path = self.tmp / "horizon.json"
        code, _ = self.invoke("memm", {"preset": "figure_one"}, variant="horizon", horizon=2.0,
                              out=str(out_path))
        self.assertEqual(code, 0)
        data = json.loads(out_path.read_text())
        self.assertEqual(data["horizon"], 2.0)
        self.assertEqual([s["initial_state"] for s in data["solutions"]], [0, 1])

    def test_horizon_sweep(self):
        out_path = self.tmp / "sweep.csv"
        code, _ = self.invoke("memm", {"preset": "figure_one", "times": [0.5, 1.0, 2.0]},
                              variant="horizon", out=str(out_path))
        self.assertEqual(code, 0)
        lines = out_path.read_text().splitlines()
        self.assertEqual(lines[0], "t,lambda1_star,lambda2_star,H1_over_t,H2_over_t")
        self.assertEqual(len(lines), 4)

    def test_memm_needs_diffusion(self):
        problem = {"lambda": [1, 1], "c": [-1, 3], "h": [1, -0.1], "sigma": [1, 0]}
        code, _ = self.invoke("memm", {"problem": problem}, variant="short", out=str(self.tmp / "x.json"))
        self.assertEqual(code, 1)

    def test_memm_incomplete_problem(self):
        code, out = self.invoke("memm", {"problem": {"lambda": [1, 1]}}, variant="short")
        self.assertEqual(code, 2)
        self.assertIn("missing", out)

    def test_levy(self):
        out_path = self.tmp / "levy.json"
        code, _ = self.invoke("levy", {"levy": {"c": 0, "h": 1, "sigma": 1, "lambda": 1}}, out=str(out_path))
        self.assertEqual(code, 0)
        data = json.loads(out_path.read_text())
        self.assertAlmostEqual(data["beta_star"], -0.5671432904, places=9)
        self.assertEqual(set(data), {"beta_star", "lambda_star", "entropy_slope"})

    def test_levy_missing_parameter(self):
        code, _ = self.invoke("levy", {"c": 0, "h": 1, "sigma": 1})
        self.assertEqual(code, 2)
        code, out = self.invoke("levy", {"levy": {"c": 0, "h": 1, "sigma": 1}})
        self.assertEqual(code, 2)
        self.assertIn("lambda", out)
        code, _ = self.invoke("levy", {"levy": {"c": 0, "h": "one", "sigma": 1, "lambda": 1}})
        self.assertEqual(code, 2)

    def test_figures(self):
        out_path = self.tmp / "figure.csv"
        code, out = self.invoke("figures", {"times": [0.1, 1.0]}, out=str(out_path))
        self.assertEqual(code, 0)
        self.assertIn("HORIZON SWEEP", out)
        rows = np.loadtxt(out_path, delimiter=",", skiprows=1)
        self.assertEqual(rows.shape, (2, 5))
        np.testing.assert_allclose(rows[:, 0], [0.1, 1.0])
        self.assertTrue(np.all(rows[:, 3:] > 0.0))


class TestGridCommands(CliTestCase):
    """Tests for simulate, expectation and entropy."""

    def test_simulate(self):
        out_path = self.tmp / "paths.csv"
        code, _ = self.invoke("simulate", {"preset": "figure_one", "dump_paths": 2},
                              step=0.25, out=str(out_path))
        self.assertEqual(code, 0)
        lines = out_path.read_text().splitlines()
        self.assertEqual(lines[0], "path_id,t,regime,Tc,Nh,Wsigma,X")
        rows = np.loadtxt(out_path, delimiter=",", skiprows=1)
        self.assertEqual(set(rows[:, 0]), {0.0, 1.0})

    def test_expectation(self):
        out_path = self.tmp / "mu.csv"
        code, _ = self.invoke("expectation", {"preset": "figure_one"}, step=1.0 / 64, out=str(out_path))
        self.assertEqual(code, 0)
        lines = out_path.read_text().splitlines()
        self.assertEqual(lines[0], "t,value_regime1,value_regime2")
        self.assertEqual(len(lines), 66)

    def test_expectation_with_monte_carlo(self):
        out_path = self.tmp / "mu.csv"
        code, out = self.invoke("expectation", {"preset": "figure_one", "check_times": [0.5, 1.0]},
                                step=1.0 / 64, paths=200, out=str(out_path))
        self.assertEqual(code, 0)
        self.assertIn("MONTE CARLO CHECK", out)
        mc = (self.tmp / "mu_mc_regime1.csv").read_text().splitlines()
        self.assertEqual(mc[0], "t,estimate,std_error,n_paths")
        self.assertEqual(len(mc), 3)
        self.assertTrue((self.tmp / "mu_mc_regime2.csv").exists())

    def test_expectation_rejects_invalid_model(self):
        code, _ = self.invoke("expectation", {"model": self.model_file("negative_rate")},
                              out=str(self.tmp / "mu.csv"))
        self.assertEqual(code, 1)

    def test_entropy_with_closed_form(self):
        change = {"regimes": [{"c_star": -0.5, "h_star": 0.5, "sigma_star": 0.3},
                              {"c_star": 0.25, "h_star": -0.25, "sigma_star": -0.4}]}
        out_path = self.tmp / "entropy.csv"
        code, out = self.invoke("entropy", {"preset": "figure_one", "change": change},
                                step=1.0 / 128, out=str(out_path))
        self.assertEqual(code, 0)
        self.assertIn("[STATS] closed form", out)
        rows = np.loadtxt(out_path, delimiter=",", skiprows=1)
        self.assertEqual(rows[0, 1], 0.0)
        self.assertTrue(np.all(rows[:, 1:] >= 0.0))

    def test_entropy_without_closed_form(self):
        out_path = self.tmp / "entropy.csv"
        code, out = self.invoke("entropy", {"model": self.model_file("semi_markov")},
                                step=1.0 / 64, out=str(out_path))
        self.assertEqual(code, 0)
        self.assertNotIn("closed form", out)


class TestOutputAndParsing(CliTestCase):
    """Tests for quiet mode, default output location and argv parsing."""

    def test_quiet(self):
        code, out = self.invoke("memm", {"preset": "figure_one"}, variant="short",
                                out=str(self.tmp / "s.json"), quiet=True)
        self.assertEqual(code, 0)
        self.assertEqual(out, "")

    def test_default_output_in_data_dir(self):
        get_data_dir.cache_clear()
        try:
            with patch.dict(os.environ, {ENV_VAR: str(self.tmp / "data")}):
                code, _ = self.invoke("memm", {"preset": "figure_one"}, variant="short")
                self.assertEqual(code, 0)
                self.assertTrue((self.tmp / "data" / "memm_short.json").exists())
        finally:
            get_data_dir.cache_clear()

    def test_main(self):
        config = write_json(self.tmp, "run.json", {"preset": "figure_one"})
        out_path = self.tmp / "long.json"
        code = cli.main(["memm", "long", "--config", str(config), "--out", str(out_path), "--quiet"])
        self.assertEqual(code, 0)
        self.assertTrue(out_path.exists())

    def test_main_rejects_unknown_variant(self):
        with redirect_stdout(io.StringIO()), patch("sys.stderr", new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                cli.main(["memm", "medium"])
            with self.assertRaises(SystemExit):
                cli.main([])


if __name__ == "__main__":
    unittest.main()
