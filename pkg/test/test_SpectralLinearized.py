import unittest
from types import SimpleNamespace
from unittest import mock

import numpy as np

from harmonic import SpectralLinearized
from harmonic.Errors import ConfigurationError, SpectralError
from harmonic.KerrLibrary import TangentMap


class AssemblyTest(unittest.TestCase):

    def test_constant_phi1(self):
        problem = SpectralLinearized.assemble(TangentMap(a=2.0, b=0.0), 256)
        x = np.zeros(problem.stiffness.shape[0])
        x[:problem.n_phi1] = 1.0
        self.assertAlmostEqual(SpectralLinearized.quadratic_form(problem, x), 8.0, delta=1e-3)

    def test_shapes(self):
        problem = SpectralLinearized.assemble(TangentMap(a=1.0, b=0.4), 32, m=2)
        self.assertEqual(problem.stiffness.shape, (64, 64))
        self.assertEqual(problem.theta.shape, (33,))
        self.assertEqual(problem.azimuthal_mode, 2)
        np.testing.assert_allclose(problem.stiffness, problem.stiffness.T)
        phi1, phi2 = problem.split(np.arange(64.0))
        self.assertEqual((phi2[0], phi2[-1]), (0.0, 0.0))
        np.testing.assert_array_equal(phi1, np.arange(33.0))

    def test_quadratic_form_ignores_antisymmetric_part(self):
        problem = SpectralLinearized.assemble(TangentMap(a=2.0, b=0.3), 32)
        x = np.random.default_rng(1).standard_normal(problem.stiffness.shape[0])
        self.assertAlmostEqual(SpectralLinearized.quadratic_form(problem, x), float(x @ problem.bilinear @ x),
                               delta=1e-9 * abs(float(x @ problem.bilinear @ x)))
        self.assertGreater(SpectralLinearized.antisymmetric_norm(problem), 0.0)
        worst = SpectralLinearized.antisymmetric_rayleigh(problem, pairs=8, seed=2)
        self.assertTrue(np.isfinite(worst) and worst > 0.0)
        self.assertEqual(worst, SpectralLinearized.antisymmetric_rayleigh(problem, pairs=8, seed=2))

    def test_preconditions(self):
        with self.assertRaises(SpectralError):
            SpectralLinearized.assemble(TangentMap(a=2.0), 8)
        with self.assertRaises(SpectralError):
            SpectralLinearized.assemble(TangentMap(a=2.0), 32, m=-1)
        with self.assertRaises(ConfigurationError):
            SpectralLinearized.solve_spectrum(2.0, 1.0, 32)


class EigenTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.problem = SpectralLinearized.assemble(TangentMap(a=2.0, b=0.25), 64)
        cls.result = SpectralLinearized.eigen(cls.problem, k=4)

    def test_sorted_and_orthonormal(self):
        mu = self.result.eigenvalues
        self.assertEqual(len(mu), 4)
        self.assertTrue(np.all(np.diff(mu) >= 0))
        x = self.result.vectors
        np.testing.assert_allclose(x.T @ self.problem.mass @ x, np.eye(4), atol=1e-8)

    def test_rayleigh_quotients(self):
        for i, mu in enumerate(self.result.eigenvalues):
            got = SpectralLinearized.rayleigh(self.problem, self.result.vectors[:, i])
            self.assertAlmostEqual(got, mu, delta=1e-8 * max(1.0, abs(mu)))

    def test_beta_bar_sup(self):
        mu2 = float(self.result.eigenvalues[1])
        if mu2 >= 0:
            beta = self.result.beta_bar_sup
            self.assertAlmostEqual(beta * beta + beta, mu2, places=9)
        else:
            self.assertIsNone(self.result.beta_bar_sup)

    def test_reflection_symmetry(self):
        mirrored = SpectralLinearized.eigen(SpectralLinearized.assemble(TangentMap(a=2.0, b=-0.25), 64), k=4)
        np.testing.assert_allclose(mirrored.eigenvalues, self.result.eigenvalues, rtol=1e-6, atol=1e-6)

    def test_higher_mode_raises_spectrum(self):
        m1 = SpectralLinearized.eigen(SpectralLinearized.assemble(TangentMap(a=2.0, b=0.25), 64, m=1), k=4)
        self.assertGreaterEqual(m1.eigenvalues[0], self.result.eigenvalues[0] - 1e-9)

    def test_refinement(self):
        fine = SpectralLinearized.eigen(SpectralLinearized.assemble(TangentMap(a=2.0, b=0.25), 128), k=4)
        np.testing.assert_allclose(fine.eigenvalues[:2], self.result.eigenvalues[:2], rtol=0.05, atol=0.05)

    def test_eigen_preconditions(self):
        with self.assertRaises(SpectralError):
            SpectralLinearized.eigen(self.problem, k=0)
        with self.assertRaises(SpectralError):
            SpectralLinearized.eigen(self.problem, k=10 ** 4)

    def test_row(self):
        header = SpectralLinearized.spectrum_header(4)
        row = SpectralLinearized.spectrum_row(0.25, 0, self.result)
        self.assertEqual(header, ["m", "b", "mu_1", "mu_2", "mu_3", "mu_4", "beta_bar_sup"])
        self.assertEqual(len(row), len(header))
        self.assertEqual(row[:2], [0, 0.25])


class DecayTest(unittest.TestCase):

    def test_exponents(self):
        self.assertEqual(SpectralLinearized.decay_exponents(6.0), (3.0, -2.0, 2.0))
        self.assertEqual(SpectralLinearized.decay_exponents(0.0), (1.0, 0.0, 0.0))
        with self.assertRaises(ConfigurationError):
            SpectralLinearized.decay_exponents(-0.5)

    def test_metrics_counted(self):
        metrics = SimpleNamespace(spectral_solves=mock.Mock())
        SpectralLinearized.solve_spectrum(2.0, 0.0, 32, k=2, metrics=metrics)
        metrics.spectral_solves.inc.assert_called_once_with()


if __name__ == "__main__":
    unittest.main()
