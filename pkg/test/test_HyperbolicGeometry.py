import math
import unittest
from types import SimpleNamespace

import numpy as np
from hypothesis import given, strategies as st

from harmonic import HyperbolicGeometry, KerrLibrary
from harmonic.Errors import ConfigurationError, GeometryError
from harmonic.HyperbolicGeometry import HPoint

coords = st.floats(-5, 5).map(lambda f: round(f, 3))
points = st.tuples(coords, coords).map(lambda p: HPoint(*p))


def fake_field(U, v, rho, z):
    return SimpleNamespace(U=np.asarray(U, dtype=float), v=np.asarray(v, dtype=float), rho=rho, z=z)


class DistanceTest(unittest.TestCase):

    def test_same_point(self):
        p = HPoint(0.3, -1.2)
        self.assertEqual(HyperbolicGeometry.distance(p, p), 0.0)

    def test_pure_u_separation(self):
        self.assertAlmostEqual(HyperbolicGeometry.distance(HPoint(0.0, 0.0), HPoint(1.5, 0.0)), 1.5, places=12)

    def test_v_shift(self):
        for c in (0.1, 1.0, 3.0):
            d = HyperbolicGeometry.distance(HPoint(0.0, 0.0), HPoint(0.0, c))
            self.assertAlmostEqual(d, 0.5 * math.acosh(1 + 2 * c * c), places=12)

    def test_large_separation_does_not_overflow(self):
        d = HyperbolicGeometry.distance(HPoint(0.0, 0.0), HPoint(400.0, 0.0))
        self.assertTrue(math.isfinite(d))
        self.assertAlmostEqual(d, 400.0, places=8)
        d = HyperbolicGeometry.distance(HPoint(300.0, 0.0), HPoint(300.0, 1.0))
        self.assertTrue(math.isfinite(d))

    def test_rejects_non_finite(self):
        with self.assertRaises(ConfigurationError):
            HPoint(float("nan"), 0.0)
        with self.assertRaises(ConfigurationError):
            HPoint(0.0, float("inf"))

    @given(points, points)
    def test_symmetric(self, p, q):
        self.assertEqual(HyperbolicGeometry.distance(p, q), HyperbolicGeometry.distance(q, p))

    @given(points, points, st.floats(-2, 2))
    def test_isometry_invariance(self, p, q, c):
        d = HyperbolicGeometry.distance(p, q)
        moved = HyperbolicGeometry.distance(p.moved(c), q.moved(c))
        self.assertLessEqual(abs(moved - d), 1e-9 * max(1.0, d))

    @given(points, points, points)
    def test_triangle_inequality(self, p, q, r):
        d_pr = HyperbolicGeometry.distance(p, r)
        d_pq = HyperbolicGeometry.distance(p, q)
        d_qr = HyperbolicGeometry.distance(q, r)
        self.assertLessEqual(d_pr, d_pq + d_qr + 1e-9 * max(1.0, d_pr))


class ComparisonTest(unittest.TestCase):

    def test_lambda(self):
        self.assertEqual(HyperbolicGeometry.lambda_comparison(0.0), 1.0)
        np.testing.assert_allclose(HyperbolicGeometry.lambda_comparison(np.array([0.0, 1.0])), [1.0, math.sqrt(2)])
        with self.assertRaises(ConfigurationError):
            HyperbolicGeometry.lambda_comparison(-0.1)

    def test_axisymmetric_laplacian_exact_on_quadratics(self):
        rho = np.array([0.0, 0.1, 0.25, 0.5, 0.8, 1.2, 1.7])
        z = np.array([-1.0, -0.6, -0.1, 0.0, 0.3, 0.9])
        R, Z = np.meshgrid(rho, z, indexing="ij")
        lap = HyperbolicGeometry.axisymmetric_laplacian(R ** 2 + Z ** 2, rho, z)
        np.testing.assert_allclose(lap[1:-1, 1:-1], 6.0, rtol=1e-10)
        self.assertTrue(np.all(np.isnan(lap[0])))
        self.assertTrue(np.all(np.isnan(lap[:, -1])))

    def test_distance_field_v_shift(self):
        rho = np.array([0.5, 1.0, 2.0])
        z = np.array([-1.0, 0.0, 1.0])
        R = np.broadcast_to(rho[:, None], (3, 3))
        c = 0.4
        # U = ln ρ is u = 0
        F = fake_field(np.log(R), np.zeros((3, 3)), rho, z)
        G = fake_field(np.log(R), np.full((3, 3), c), rho, z)
        np.testing.assert_allclose(HyperbolicGeometry.distance_field(F, G), 0.5 * math.acosh(1 + 2 * c * c))
        F0 = fake_field(np.zeros((3, 3)), np.zeros((3, 3)), rho, z)
        G0 = fake_field(np.zeros((3, 3)), np.full((3, 3), c), rho, z)
        expected = 0.5 * np.arccosh(1 + 2 * c * c / R ** 4)
        np.testing.assert_allclose(HyperbolicGeometry.distance_field(F0, G0), expected, rtol=1e-12)

    def test_distance_field_on_axis(self):
        rho = np.array([0.0, 1.0])
        z = np.array([0.0, 1.0])
        F = fake_field(np.zeros((2, 2)), np.zeros((2, 2)), rho, z)
        G = fake_field(np.zeros((2, 2)), np.array([[0.0, 1.0], [0.0, 0.0]]), rho, z)
        d = HyperbolicGeometry.distance_field(F, G)
        self.assertEqual(d[0, 0], 0.0)
        self.assertTrue(np.isinf(d[0, 1]))

    def test_distance_field_needs_same_grid(self):
        F = fake_field(np.zeros((2, 2)), np.zeros((2, 2)), np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        G = fake_field(np.zeros((2, 2)), np.zeros((2, 2)), np.array([0.0, 2.0]), np.array([0.0, 1.0]))
        with self.assertRaises(GeometryError):
            HyperbolicGeometry.distance_field(F, G)

    def test_comparison_laplacian_of_identical_fields(self):
        rho = np.linspace(0.5, 2.0, 6)
        z = np.linspace(-1.0, 1.0, 5)
        R = np.broadcast_to(rho[:, None], (6, 5))
        F = fake_field(np.log(R), np.zeros((6, 5)), rho, z)
        lap = HyperbolicGeometry.comparison_laplacian(F, F)
        np.testing.assert_allclose(lap[1:-1, 1:-1], 0.0, atol=1e-10)

    def test_comparison_laplacian_of_distinct_kerr_maps(self):
        rho = np.linspace(1.0, 3.0, 161)
        z = np.linspace(-2.0, 2.0, 321)
        R, Z = np.meshgrid(rho, z, indexing="ij")
        h = rho[1] - rho[0]
        base = KerrLibrary.KerrParams.from_angular_momentum(1.0)
        for other in (KerrLibrary.KerrParams.from_angular_momentum(1.0, center_z=0.5),
                      KerrLibrary.KerrParams.from_angular_momentum(2.0),
                      KerrLibrary.KerrParams.from_angular_momentum(0.5, center_z=-0.3, offset=0.4)):
            F = fake_field(*KerrLibrary.kerr_eval(base, R, Z), rho, z)
            G = fake_field(*KerrLibrary.kerr_eval(other, R, Z), rho, z)
            lap = HyperbolicGeometry.comparison_laplacian(F, G)[1:-1, 1:-1]
            self.assertTrue(np.all(np.isfinite(lap)))
            self.assertGreaterEqual(np.min(lap), -100.0 * h * h)
            self.assertGreater(np.max(lap), 1e-3)


if __name__ == "__main__":
    unittest.main()
