import csv
import json
import os
import tempfile
import unittest
from unittest import mock

import numpy as np

from commands import KerrDump, Verify
from harmonic import HalfplaneSolver
from kerrflow import Kerrflow

SMALL_GRID = {"rho_max": 10.0, "z_half_width": 10.0, "n_rho": 64, "n_z": 128, "excision_radius": 0.05}
FLAT_GRID = {"rho_max": 2.0, "z_half_width": 2.0, "n_rho": 16, "n_z": 16, "grading": 0.0}


class CommandTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        cwd = os.getcwd()
        os.chdir(self.tmp.name)
        self.addCleanup(os.chdir, cwd)
        self.out = os.path.join(self.tmp.name, "out")
        self.app = Kerrflow()
        self.app.load_commands()

    def write_config(self, data, name="run.json"):
        path = os.path.join(self.tmp.name, name)
        with open(path, "w", encoding="UTF-8") as file:
            file.write(data if isinstance(data, str) else json.dumps(data))
        return path

    def run_cli(self, config, *args):
        return self.app.run(["--config", self.write_config(config), "--out", self.out, "--quiet", *args])

    def read_json(self, name):
        with open(os.path.join(self.out, name), encoding="UTF-8") as file:
            return json.load(file)

    def read_csv(self, name):
        with open(os.path.join(self.out, name), encoding="UTF-8", newline="") as file:
            return list(csv.reader(file))

    def test_commands_registered(self):
        self.assertEqual(set(self.app.commands), {"solve", "flow", "spectrum", "kerr-dump", "verify"})

    def test_kerr_dump(self):
        self.assertEqual(self.run_cli({"grid": SMALL_GRID}, "kerr-dump", "--J", "1", "--n", "5"), 0)
        field = self.read_csv("kerr_field.csv")
        self.assertEqual(field[0], ["rho", "z", "U", "v", "res_U", "res_v"])
        self.assertEqual(len(field), 64 * 128 + 1)
        table = self.read_csv("f_table.csv")
        self.assertEqual(table[0], KerrDump.F_HEADER)
        self.assertEqual(len(table), 6)
        self.assertAlmostEqual(float(table[3][0]), 0.0, places=12)
        manifest = self.read_json("manifest.json")
        self.assertEqual((manifest["command"], manifest["status"]), ("kerr-dump", "ok"))
        self.assertTrue(os.path.isfile(os.path.join(self.out, "metrics.prom")))

    def test_spectrum(self):
        config = {"spectral": {"n_theta": 32, "k": 3, "modes": [0], "b_list": [0.0]}}
        self.assertEqual(self.run_cli(config, "spectrum", "--b", "0.2", "--b", "-0.2", "--mode", "1"), 0)
        rows = self.read_csv("spectrum.csv")
        self.assertEqual(rows[0], ["m", "b", "mu_1", "mu_2", "mu_3", "beta_bar_sup"])
        self.assertEqual([r[:2] for r in rows[1:]], [["1", "0.20000000000000001"], ["1", "-0.20000000000000001"]])
        doc = self.read_json("spectrum.json")
        self.assertEqual(len(doc["rows"]), 2)
        self.assertIn("antisymmetric_norm", doc["rows"][0])

    def test_usage_error(self):
        self.assertEqual(self.run_cli({}, "spectrum", "--b", "1"), 2)
        self.assertEqual(self.run_cli({}, "no-such-command"), 2)

    def test_malformed_config(self):
        self.assertEqual(self.run_cli("{\"punctures\": [", "solve"), 2)
        error = self.read_json("error.json")
        self.assertEqual((error["type"], error["exit_code"]), ("ConfigurationError", 2))
        self.assertEqual(self.read_json("manifest.json")["status"], "ConfigurationError")

    def test_flat_solve(self):
        self.assertEqual(self.run_cli({"grid": FLAT_GRID}, "solve"), 0)
        summary = self.read_json("summary.json")
        self.assertEqual(summary["energy"], 0.0)
        self.assertTrue(summary["mass_bound_satisfied"])
        self.assertEqual(len(self.read_csv("field.csv")), 16 * 16 + 1)

    def test_solve_unconverged_field(self):
        def stalled(problem, opts=None, metrics=None):
            return HalfplaneSolver.sample_field(problem, lambda r, z: (np.zeros_like(r), np.zeros_like(r)))

        with mock.patch.object(HalfplaneSolver, "solve", side_effect=stalled):
            self.assertEqual(self.run_cli({"grid": FLAT_GRID}, "solve"), 1)
        self.assertEqual(len(self.read_csv("field.csv")), 16 * 16 + 1)
        self.assertFalse(os.path.exists(os.path.join(self.out, "summary.json")))
        self.assertEqual(self.read_json("manifest.json")["status"], "failed")

    def test_verify_solver_suite_checks_closed_form(self):
        ctx = Verify.VerifyContext(0, HalfplaneSolver.SolverOptions())
        out = Verify.SuiteResult("solver")
        Verify.suite_solver(ctx, out)
        checks = {c.name: c for c in out.checks}
        self.assertTrue(checks["closed_form_difference"].passed)
        self.assertLess(checks["closed_form_difference"].value, 0.25)
        self.assertTrue(checks["converged"].passed)

    def test_verify_geometry(self):
        self.assertEqual(self.run_cli({"seed": 3}, "--seed", "5", "verify", "--suite", "geometry"), 0)
        report = self.read_json("verify.json")
        self.assertTrue(report["passed"])
        self.assertEqual(report["seed"], 5)
        self.assertEqual([s["suite"] for s in report["suites"]], ["geometry"])
        with open(os.path.join(self.out, "metrics.prom"), encoding="UTF-8") as file:
            self.assertIn('verify_suites_total{suite="geometry",verdict="pass"} 1.0', file.read())

    def test_version(self):
        self.assertEqual(self.app.run(["--version"]), 0)

    @unittest.skipUnless(os.environ.get("KERRFLOW_SLOW"), "set KERRFLOW_SLOW to run")
    def test_flow_single_puncture(self):
        config = {"punctures": [{"z": 0.0, "J": 1.0}], "grid": SMALL_GRID, "flow": {"dt": 0.5, "t_max": 1.0}}
        self.assertEqual(self.run_cli(config, "flow"), 0)
        rows = self.read_csv("trajectory.csv")
        self.assertEqual(rows[0], ["t", "z_1", "b_1", "E"])
        self.assertEqual(len(rows), 4)
        summary = self.read_json("flow_summary.json")
        self.assertEqual(summary["terminated_by"], "t_max")
        self.assertTrue(summary["monotonicity"]["ok"])
        self.assertTrue(os.path.isfile(os.path.join(self.out, "trajectory.events.jsonl")))


if __name__ == "__main__":
    unittest.main()
