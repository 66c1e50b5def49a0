import math
import os
import unittest
from unittest import mock

import numpy as np

from harmonic import EnergyDefects, HalfplaneSolver, KerrLibrary
from harmonic.Errors import GeometryError, UnconvergedField
from harmonic.HalfplaneSolver import GridSpec, PunctureConfig

SLOW = bool(os.environ.get("KERRFLOW_SLOW"))


def small_grid(config):
    return GridSpec.centered_on(config, 10.0, rho_max=10.0, n_rho=64, n_z=128, excision_radius=0.05)


def planted_tangent(J, b, center=0.0):
    a = KerrLibrary.tangent_scale(J)

    def evaluator(rho, z):
        r = np.hypot(rho, z - center)
        ub, vb = KerrLibrary.tangent_values(a, b, (z - center) / r)
        return np.log(r) + ub, vb

    return evaluator


class SolvedFieldTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        config = PunctureConfig.from_lists([0.0], [1.0])
        cls.F = HalfplaneSolver.solve(HalfplaneSolver.discretize(config, small_grid(config)))

    def test_energy(self):
        report = EnergyDefects.energy(self.F)
        self.assertGreater(report.E_grid, 0.0)
        self.assertEqual(len(report.E_excision), 1)
        self.assertAlmostEqual(report.E_excision[0], KerrLibrary.excision_energy(self.F.b[0], 0.05), places=10)
        self.assertAlmostEqual(report.E_total, report.E_grid + report.E_excision[0], places=10)
        self.assertAlmostEqual(report.mass_bound, report.E_total / (8 * math.pi), places=12)
        self.assertTrue(0.5 < report.mass_bound < 1.1)

    def test_mass_bound_check(self):
        value, sqrt_j, _ = EnergyDefects.mass_bound_check(self.F)
        self.assertEqual(sqrt_j, 1.0)
        self.assertGreater(value, 0.0)

    def test_defects(self):
        report = EnergyDefects.defect_report(self.F)
        self.assertEqual(report.rod_defects[0], 0.0)
        self.assertEqual(len(report.rod_defects), 2)
        self.assertLessEqual(abs(report.b[0]), 0.05)
        self.assertEqual(report.method_fit, list(self.F.b_fit))
        self.assertEqual(len(report.to_dict()["defect_diffs"]), 1)

    def test_alpha_gradient_vanishes_on_axis(self):
        a_rho, a_z = EnergyDefects.alpha_gradient(self.F)
        np.testing.assert_array_equal(a_rho[0], 0.0)
        np.testing.assert_array_equal(a_z[0], 0.0)
        self.assertTrue(np.all(np.isfinite(a_rho)) and np.all(np.isfinite(a_z)))

    def test_semicircle_preconditions(self):
        with self.assertRaises(GeometryError):
            EnergyDefects.alpha_defect(self.F, 0, 0.05)
        with self.assertRaises(GeometryError):
            EnergyDefects.alpha_defect(self.F, 0, 20.0)

    def test_summary(self):
        out = EnergyDefects.summary(self.F)
        self.assertEqual(out["sqrt_J_total"], 1.0)
        self.assertEqual(len(out["b"]), 1)
        self.assertEqual(out["iterations"], self.F.iterations)


class ExtractionTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.config = PunctureConfig.from_lists([0.0], [1.0])
        cls.problem = HalfplaneSolver.discretize(cls.config, small_grid(cls.config))

    def test_tangent_fit_recovers_planted_parameter(self):
        for b0 in (0.0, 0.3, -0.6):
            F = HalfplaneSolver.sample_field(self.problem, planted_tangent(1.0, b0), b=[b0])
            b, misfit = EnergyDefects.tangent_fit(F, 0)
            self.assertAlmostEqual(b, b0, delta=2e-3)
            self.assertLess(misfit, 1e-3)

    def test_unsolved_field_has_no_energy(self):
        F = HalfplaneSolver.sample_field(self.problem, planted_tangent(1.0, 0.0))
        with self.assertRaises(UnconvergedField):
            EnergyDefects.energy(F)

    def test_flat_summary(self):
        flat = PunctureConfig()
        F = HalfplaneSolver.solve(HalfplaneSolver.discretize(
            flat, GridSpec(rho_max=2.0, z_min=-2.0, z_max=2.0, n_rho=16, n_z=16, grading=0.0)))
        out = EnergyDefects.summary(F)
        self.assertEqual(out["energy"], 0.0)
        self.assertTrue(out["mass_bound_satisfied"])
        self.assertEqual(out["b"], [])

    def test_sensitivity_step_range(self):
        for h in (0.0, 0.1, -0.01):
            with self.assertRaises(GeometryError):
                EnergyDefects.sensitivity_check(self.config, 0, h, small_grid(self.config))

    @unittest.skipUnless(SLOW, "set KERRFLOW_SLOW to run")
    def test_sensitivity(self):
        report = EnergyDefects.sensitivity_check(self.config, 0, 0.02, small_grid(self.config), half_step=True)
        self.assertLess(report.misfit, 0.1)
        self.assertLess(report.translation_misfit, 0.1)
        self.assertLess(report.extra["half_step_misfit"], 0.1)
        self.assertEqual(report.samples, EnergyDefects.RING_SAMPLES)


class TranslationSensitivityTest(unittest.TestCase):
    """A lone tangent field moved rigidly: U̇ must be −∂zU, and the leading profile is exact."""

    def setUp(self):
        self.config = PunctureConfig.from_lists([0.0], [1.0])
        self.grid = GridSpec.centered_on(self.config, 4.0, rho_max=4.0, n_rho=192, n_z=384, excision_radius=0.05)
        self.solves = 0

    def translated_solve(self, problem, opts=None, metrics=None):
        self.solves += 1
        F = HalfplaneSolver.sample_field(problem, planted_tangent(1.0, 0.0, problem.config.zs[0]), b=[0.0],
                                         converged=True)
        F.b_fit = np.zeros(1)
        return F

    def test_translation_matches_z_derivative(self):
        with mock.patch.object(HalfplaneSolver, "solve", side_effect=self.translated_solve):
            report = EnergyDefects.sensitivity_check(self.config, 0, 0.004, self.grid, half_step=True)
        self.assertEqual(self.solves, 6)
        self.assertEqual(report.b_dot, 0.0)
        self.assertLess(report.translation_misfit, 1e-3)
        self.assertLess(report.misfit, 1e-3)
        self.assertLess(report.extra["half_step_translation_misfit"], 1e-3)
        self.assertLess(report.extra["half_step_ratio"], 2.0)

    def test_pair_has_no_translation_reference(self):
        pair = PunctureConfig.from_lists([-1.0, 1.0], [1.0, 1.0])

        def pair_solve(problem, opts=None, metrics=None):
            zs = problem.config.zs
            lower, upper = planted_tangent(1.0, 0.0, zs[0]), planted_tangent(1.0, 0.0, zs[1])

            def evaluator(rho, z):
                return np.where(z < 0, lower(rho, z)[0], upper(rho, z)[0]), np.zeros_like(z)

            F = HalfplaneSolver.sample_field(problem, evaluator, b=[0.0, 0.0], converged=True)
            F.b_fit = np.zeros(2)
            return F

        grid = GridSpec.centered_on(pair, 4.0, rho_max=4.0, n_rho=192, n_z=384, excision_radius=0.05)
        with mock.patch.object(HalfplaneSolver, "solve", side_effect=pair_solve):
            report = EnergyDefects.sensitivity_check(pair, 0, 0.004, grid)
        self.assertIsNone(report.translation_misfit)
        self.assertEqual(report.extra, {})


if __name__ == "__main__":
    unittest.main()
