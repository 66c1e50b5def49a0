import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from harmonic import KerrLibrary
from harmonic.Errors import ConfigurationError, GeometryError
from harmonic.KerrLibrary import KerrParams, TangentMap

tangent_b = st.floats(-0.95, 0.95).map(lambda f: round(f, 3))


class ConventionTest(unittest.TestCase):

    def test_scales(self):
        self.assertEqual(KerrLibrary.tangent_scale(-3.0), 6.0)
        self.assertEqual(KerrLibrary.kerr_parameter(-4.0), 2.0)

    def test_tangent_map_validation(self):
        for b in (1.0, -1.0, 1.5, float("nan")):
            with self.assertRaises(ConfigurationError):
                TangentMap(a=2.0, b=b)
        with self.assertRaises(ConfigurationError):
            TangentMap(a=0.0)
        self.assertEqual(TangentMap.for_puncture(-1.5, 0.2), TangentMap(a=3.0, b=0.2))

    def test_kerr_params(self):
        k = KerrParams.from_angular_momentum(-4.0, center_z=1.0, offset=0.5)
        self.assertEqual(k.a_kerr, 2.0)
        self.assertEqual(k.sign, -1)
        self.assertEqual(k.J, -4.0)
        self.assertEqual(k.rod_values, (8.5, -7.5))
        self.assertEqual(k.tangent(), TangentMap(a=8.0, b=0.0))
        with self.assertRaises(ConfigurationError):
            KerrParams.from_angular_momentum(0.0)
        with self.assertRaises(ConfigurationError):
            KerrParams(a_kerr=1.0, sign=2)


class KerrMapTest(unittest.TestCase):

    def test_axis_values(self):
        k = KerrParams.from_angular_momentum(1.5, center_z=0.5)
        _, v = KerrLibrary.kerr_eval(k, np.zeros(4), np.array([-3.0, -0.1, 1.0, 7.0]))
        np.testing.assert_allclose(v, [-3.0, -3.0, 3.0, 3.0], rtol=1e-14)

    def test_evaluation_at_puncture(self):
        with self.assertRaises(GeometryError):
            KerrLibrary.kerr_eval(KerrParams.from_angular_momentum(1.0), 0.0, 0.0)

    def test_fourth_order_residual_is_small(self):
        k = KerrParams.from_angular_momentum(1.0)
        res_U, res_v = KerrLibrary.kerr_residual(k, np.array([0.7, 1.5]), np.array([0.4, -2.0]), 1e-3, order=4)
        self.assertLess(max(np.max(np.abs(res_U)), np.max(np.abs(res_v))), 1e-6)

    def test_second_order_convergence(self):
        k = KerrParams.from_angular_momentum(2.0)
        rho, z = np.array([0.8, 1.5, 2.5]), np.array([0.6, -1.2, 2.0])
        errors = []
        for h in (0.04, 0.02, 0.01):
            res_U, res_v = KerrLibrary.kerr_residual(k, rho, z, h)
            errors.append(max(np.max(np.abs(res_U)), np.max(np.abs(res_v))))
        for e0, e1 in zip(errors[:-1], errors[1:]):
            self.assertAlmostEqual(math.log2(e0 / e1), 2.0, delta=0.3)

    def test_residual_preconditions(self):
        k = KerrParams.from_angular_momentum(1.0)
        with self.assertRaises(GeometryError):
            KerrLibrary.kerr_residual(k, 0.01, 1.0, 0.01)
        with self.assertRaises(ConfigurationError):
            KerrLibrary.kerr_residual(k, 1.0, 1.0, 0.01, order=3)


class TangentMapTest(unittest.TestCase):
    theta = np.linspace(0.2, math.pi - 0.2, 31)

    @given(tangent_b)
    def test_identities(self, b):
        lhs1, rhs1, lhs2, rhs2 = KerrLibrary.tangent_identity_check(TangentMap(a=2.0, b=b), self.theta)
        np.testing.assert_allclose(lhs1, rhs1, rtol=1e-10)
        np.testing.assert_allclose(lhs2, rhs2, rtol=1e-10)

    @given(tangent_b)
    def test_harmonic(self, b):
        res_u, res_v = KerrLibrary.tangent_harmonic_residual(TangentMap(a=1.0, b=b), self.theta)
        self.assertLess(max(np.max(np.abs(res_u)), np.max(np.abs(res_v))), 1e-4)

    def test_derivatives_match_differences(self):
        tm = TangentMap(a=3.0, b=0.35)
        du_dt, dv_dt, du_db, dv_db = KerrLibrary.tangent_derivatives(tm, self.theta)
        h = 1e-6
        up, vp = KerrLibrary.tangent_eval(tm, self.theta + h)
        um, vm = KerrLibrary.tangent_eval(tm, self.theta - h)
        np.testing.assert_allclose(du_dt, (up - um) / (2 * h), atol=1e-7)
        np.testing.assert_allclose(dv_dt, (vp - vm) / (2 * h), atol=1e-7)
        up, vp = KerrLibrary.tangent_eval(TangentMap(a=3.0, b=0.35 + h), self.theta)
        um, vm = KerrLibrary.tangent_eval(TangentMap(a=3.0, b=0.35 - h), self.theta)
        np.testing.assert_allclose(du_db, (up - um) / (2 * h), atol=1e-7)
        np.testing.assert_allclose(dv_db, (vp - vm) / (2 * h), atol=1e-6)

    def test_poles_rejected(self):
        with self.assertRaises(GeometryError):
            KerrLibrary.tangent_eval(TangentMap(a=1.0), np.array([0.0, 1.0]))

    def test_finite_at_poles(self):
        ub, vb = KerrLibrary.tangent_values(2.0, 0.3, np.array([-1.0, 1.0]))
        self.assertTrue(np.all(np.isfinite(ub)) and np.all(np.isfinite(vb)))
        np.testing.assert_allclose(vb, [-2.0, 2.0])


class DissipationFunctionTest(unittest.TestCase):

    def test_values_at_zero(self):
        self.assertAlmostEqual(KerrLibrary.f3(0.0), 0.0, delta=1e-10)
        self.assertAlmostEqual(KerrLibrary.f4(0.0), 0.0, delta=1e-10)
        self.assertAlmostEqual(KerrLibrary.df3(0.0), 4 * math.pi * (4 - math.pi), delta=1e-6)
        self.assertAlmostEqual(KerrLibrary.df4(0.0), 4 * math.pi * (math.pi - 3), delta=1e-6)

    @settings(max_examples=20, deadline=None)
    @given(tangent_b)
    def test_f_is_odd(self, b):
        self.assertAlmostEqual(KerrLibrary.f(b), -KerrLibrary.f(-b), delta=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(tangent_b)
    def test_dissipation_sign(self, b):
        self.assertGreaterEqual(KerrLibrary.f(b) * b, -1e-12)

    def test_derivative_matches_difference(self):
        h = 1e-5
        for b in (-0.5, 0.2, 0.7):
            fd = (KerrLibrary.f3(b + h) - KerrLibrary.f3(b - h)) / (2 * h)
            self.assertAlmostEqual(KerrLibrary.df3(b), fd, delta=1e-5)
            fd = (KerrLibrary.f4(b + h) - KerrLibrary.f4(b - h)) / (2 * h)
            self.assertAlmostEqual(KerrLibrary.df4(b), fd, delta=1e-5)

    def test_vectorised(self):
        b = np.array([[-0.3, 0.0], [0.1, 0.6]])
        out = KerrLibrary.f(b)
        self.assertEqual(out.shape, (2, 2))
        self.assertAlmostEqual(out[1, 1], KerrLibrary.f(0.6), places=12)
        with self.assertRaises(ConfigurationError):
            KerrLibrary.f(np.array([0.0, 1.0]))

    def test_energy_gradient_and_rate(self):
        b = [0.2, -0.4]
        np.testing.assert_allclose(KerrLibrary.energy_gradient(b), [KerrLibrary.f(0.2), KerrLibrary.f(-0.4)])
        self.assertLess(KerrLibrary.dissipation_rate(b), 0.0)
        self.assertEqual(KerrLibrary.dissipation_rate([]), 0.0)

    def test_tangent_energy(self):
        self.assertAlmostEqual(KerrLibrary.tangent_energy_integral(0.0), math.pi, places=10)
        self.assertAlmostEqual(KerrLibrary.excision_energy(0.0, 0.01), 2 * math.pi ** 2 * 0.01, places=12)


if __name__ == "__main__":
    unittest.main()
