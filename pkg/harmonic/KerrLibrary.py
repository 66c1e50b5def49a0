"""
Closed-form extreme Kerr harmonic maps, the renormalized tangent maps at a puncture and
the dissipation functions f₃, f₄, f = f₃ + f₄.

Conventions: a puncture with angular momentum J has tangent scale a_tan = 2|J| and Kerr
parameter a_kerr = √|J|. Only `tangent_scale` and `kerr_parameter` convert between them.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from harmonic.Errors import ConfigurationError, GeometryError, QuadratureError

FOUR_PI = 4.0 * math.pi
QUAD_EPSABS = 1e-12
QUAD_LIMIT = 200


def tangent_scale(J: float) -> float:
    return 2.0 * abs(J)


def kerr_parameter(J: float) -> float:
    return math.sqrt(abs(J))


def _check_b(b):
    b_arr = np.asarray(b, dtype=float)
    if np.any(~np.isfinite(b_arr)) or np.any(np.abs(b_arr) >= 1.0):
        raise ConfigurationError(f"tangent parameter must satisfy |b| < 1, got {b}")


def _check_theta(theta):
    t = np.asarray(theta, dtype=float)
    if np.any(~(t > 0.0)) or np.any(~(t < math.pi)):
        raise GeometryError("tangent maps are evaluated for 0 < θ < π")


@dataclass(frozen=True)
class TangentMap:
    a: float
    b: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigurationError(f"tangent scale must be positive, got {self.a}")
        _check_b(self.b)

    @classmethod
    def for_puncture(cls, J: float, b: float = 0.0):
        return cls(a=tangent_scale(J), b=b)


@dataclass(frozen=True)
class KerrParams:
    a_kerr: float
    center_z: float = 0.0
    sign: int = 1
    offset: float = 0.0

    def __post_init__(self):
        if not self.a_kerr > 0:
            raise ConfigurationError(f"Kerr parameter must be positive, got {self.a_kerr}")
        if self.sign not in (1, -1):
            raise ConfigurationError(f"orientation sign must be ±1, got {self.sign}")

    @classmethod
    def from_angular_momentum(cls, J: float, center_z: float = 0.0, offset: float = 0.0):
        if J == 0:
            raise ConfigurationError("a Kerr puncture needs nonzero angular momentum")
        return cls(a_kerr=kerr_parameter(J), center_z=center_z, sign=1 if J > 0 else -1, offset=offset)

    @property
    def J(self) -> float:
        return self.sign * self.a_kerr ** 2

    @property
    def rod_values(self):
        """(south, north) axis values of v."""
        return self.offset - 2.0 * self.J, self.offset + 2.0 * self.J

    def tangent(self) -> TangentMap:
        return TangentMap.for_puncture(self.J, 0.0)


def tangent_values(a, b, c):
    """(Ū, v̄) as functions of c = cos θ; finite at the poles."""
    d = 1.0 + c * c + 2.0 * b * c
    ubar = -0.5 * np.log(2.0 * a * np.sqrt(1.0 - b * b) / d)
    vbar = a * (b * (1.0 + c * c) + 2.0 * c) / d
    return ubar, vbar


def tangent_eval(tm: TangentMap, theta):
    _check_theta(theta)
    return tangent_values(tm.a, tm.b, np.cos(theta))


def tangent_derivatives(tm: TangentMap, theta):
    """(∂θŪ, ∂θv̄, ∂bŪ, ∂bv̄)"""
    _check_theta(theta)
    a, b = tm.a, tm.b
    s, c = np.sin(theta), np.cos(theta)
    d = 1.0 + c * c + 2.0 * b * c
    n = b * (1.0 + c * c) + 2.0 * c
    du_dtheta = -s * (c + b) / d
    dv_dtheta = -2.0 * a * s ** 3 * (1.0 - b * b) / (d * d)
    du_db = b / (2.0 * (1.0 - b * b)) + c / d
    dv_db = a * ((1.0 + c * c) * d - 2.0 * c * n) / (d * d)
    return du_dtheta, dv_dtheta, du_db, dv_db


def tangent_weight(tm: TangentMap, theta):
    """e^{4ū} with ū = Ū − ln sin θ."""
    s, c = np.sin(theta), np.cos(theta)
    d = 1.0 + c * c + 2.0 * tm.b * c
    return d * d / (4.0 * tm.a ** 2 * (1.0 - tm.b ** 2) * s ** 4)


def tangent_identity_check(tm: TangentMap, theta):
    """
    Both sides of e^{4ū}∂θv̄ = −1/(2a sin θ) and
    1 + (∂θŪ)² + e^{4ū}(∂θv̄)² = 2(1 + b cos θ)/(1 + cos²θ + 2b cos θ).
    """
    du, dv, _, _ = tangent_derivatives(tm, theta)
    s, c = np.sin(theta), np.cos(theta)
    w = tangent_weight(tm, theta)
    lhs1 = w * dv
    rhs1 = -1.0 / (2.0 * tm.a * s)
    lhs2 = 1.0 + du * du + w * dv * dv
    rhs2 = 2.0 * (1.0 + tm.b * c) / (1.0 + c * c + 2.0 * tm.b * c)
    return lhs1, rhs1, lhs2, rhs2


def tangent_harmonic_residual(tm: TangentMap, theta, h=1e-4):
    """
    Residuals of the harmonic map system on S² for (ū(θ), v̄(θ)):
    (1/sin θ)(sin θ ū')' − 2e^{4ū}v̄'² and (1/sin θ)(sin θ v̄')' + 4ū'v̄', by centered differences.
    """
    theta = np.asarray(theta, dtype=float)
    _check_theta(theta - h)
    _check_theta(theta + h)

    def ubar_vbar(t):
        ub, vb = tangent_values(tm.a, tm.b, np.cos(t))
        return ub - np.log(np.sin(t)), vb

    (um, vm), (u0, v0), (up, vp) = ubar_vbar(theta - h), ubar_vbar(theta), ubar_vbar(theta + h)
    cot = np.cos(theta) / np.sin(theta)
    du, dv = (up - um) / (2 * h), (vp - vm) / (2 * h)
    d2u, d2v = (up - 2 * u0 + um) / h ** 2, (vp - 2 * v0 + vm) / h ** 2
    res_u = d2u + cot * du - 2.0 * np.exp(4.0 * u0) * dv * dv
    res_v = d2v + cot * dv + 4.0 * du * dv
    return res_u, res_v


def kerr_eval(k: KerrParams, rho, z):
    """
    (U, v) of the extreme Kerr map, U = u + ln ρ, in polar coordinates (r, θ) about the
    puncture. Finite on the axis; singular only at the puncture.
    """
    rho = np.asarray(rho, dtype=float)
    dz = np.asarray(z, dtype=float) - k.center_z
    r = np.hypot(rho, dz)
    if np.any(r == 0.0):
        raise GeometryError(f"Kerr map evaluated at its puncture z={k.center_z}")
    a = k.a_kerr
    c = dz / r
    s2 = (rho / r) ** 2
    big_r = r + a
    den = big_r * big_r + a * a * c * c
    q = big_r * big_r + a * a + 2.0 * a ** 3 * big_r * s2 / den
    U = np.log(r) - 0.5 * np.log(q)
    v = k.sign * (a * a * c * (3.0 - c * c) + a ** 4 * c * s2 * s2 / den) + k.offset
    return U, v


def _diff_stencil(order):
    if order == 2:
        return np.array([-1, 0, 1]), np.array([-0.5, 0.0, 0.5]), np.array([1.0, -2.0, 1.0])
    if order == 4:
        return (np.array([-2, -1, 0, 1, 2]),
                np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
                np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0)
    raise ConfigurationError(f"finite-difference order must be 2 or 4, got {order}")


def map_residual(evaluator, rho, z, h, order=2):
    """
    Finite-difference residual of ΔU − 2e^{4U}ρ⁻⁴|∇v|² and ∂²v − (3/ρ)∂ρv + ∂²zv + 4∇U·∇v for
    any map evaluator (ρ, z) -> (U, v) at off-axis points.
    """
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(rho <= 2 * h):
        raise GeometryError("map residual needs points at distance > 2h from the axis")
    offsets, first, second = _diff_stencil(order)
    U0, v0 = evaluator(rho, z)
    dUr = np.zeros_like(U0)
    dvr, d2Ur, d2vr = np.zeros_like(U0), np.zeros_like(U0), np.zeros_like(U0)
    dUz, dvz, d2Uz, d2vz = np.zeros_like(U0), np.zeros_like(U0), np.zeros_like(U0), np.zeros_like(U0)
    for off, w1, w2 in zip(offsets, first, second):
        Ur, vr = (U0, v0) if off == 0 else evaluator(rho + off * h, z)
        Uz, vz = (U0, v0) if off == 0 else evaluator(rho, z + off * h)
        dUr += w1 * Ur
        dvr += w1 * vr
        d2Ur += w2 * Ur
        d2vr += w2 * vr
        dUz += w1 * Uz
        dvz += w1 * vz
        d2Uz += w2 * Uz
        d2vz += w2 * vz
    dUr, dvr, dUz, dvz = dUr / h, dvr / h, dUz / h, dvz / h
    d2Ur, d2vr, d2Uz, d2vz = d2Ur / h ** 2, d2vr / h ** 2, d2Uz / h ** 2, d2vz / h ** 2
    res_U = d2Ur + dUr / rho + d2Uz - 2.0 * np.exp(4.0 * U0) / rho ** 4 * (dvr ** 2 + dvz ** 2)
    res_v = d2vr - 3.0 * dvr / rho + d2vz + 4.0 * (dUr * dvr + dUz * dvz)
    return res_U, res_v


def kerr_residual(k: KerrParams, rho, z, h, order=2):
    return map_residual(lambda r, zz: kerr_eval(k, r, zz), rho, z, h, order)


def _quad(fn, label):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(fn, 0.0, math.pi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSABS, limit=QUAD_LIMIT)
        except integrate.IntegrationWarning as e:
            raise QuadratureError(f"{label}: {e}") from e
    return value


def _scalar_or_map(fn, b):
    _check_b(b)
    if np.ndim(b) == 0:
        return fn(float(b))
    return np.array([fn(float(x)) for x in np.ravel(b)]).reshape(np.shape(b))


def _f3(b):
    return FOUR_PI * _quad(lambda t: math.sin(t) ** 3 * (math.cos(t) + b) / (1 + math.cos(t) ** 2 + 2 * b * math.cos(t)),
                           f"f3({b})")


def _f4(b):
    return -FOUR_PI * _quad(lambda t: (1 + b * math.cos(t)) * math.sin(t) * math.cos(t)
                            / (1 + math.cos(t) ** 2 + 2 * b * math.cos(t)), f"f4({b})")


def _df3(b):
    return FOUR_PI * _quad(lambda t: math.sin(t) ** 5 / (1 + math.cos(t) ** 2 + 2 * b * math.cos(t)) ** 2,
                           f"f3'({b})")


def _df4(b):
    return FOUR_PI * _quad(lambda t: math.sin(t) ** 3 * math.cos(t) ** 2
                           / (1 + math.cos(t) ** 2 + 2 * b * math.cos(t)) ** 2, f"f4'({b})")


def f3(b):
    return _scalar_or_map(_f3, b)


def f4(b):
    return _scalar_or_map(_f4, b)


def f(b):
    return _scalar_or_map(lambda x: _f3(x) + _f4(x), b)


def df3(b):
    return _scalar_or_map(_df3, b)


def df4(b):
    return _scalar_or_map(_df4, b)


def energy_gradient(b_list):
    """∂E/∂z_i = f(b_i)."""
    return np.asarray(f(np.asarray(b_list, dtype=float)), dtype=float)


def dissipation_rate(b_list):
    """dE/dt = −Σ f(b_i) b_i along dz_i/dt = −b_i."""
    b = np.asarray(b_list, dtype=float)
    if b.size == 0:
        return 0.0
    return float(-np.sum(energy_gradient(b) * b))


def tangent_energy_integral(b):
    """∫₀^π 2(1 + b cos θ)/(1 + cos²θ + 2b cos θ) sin θ dθ; equals π at b = 0."""
    return _scalar_or_map(lambda x: _quad(lambda t: 2 * (1 + x * math.cos(t)) * math.sin(t)
                                          / (1 + math.cos(t) ** 2 + 2 * x * math.cos(t)),
                                          f"tangent energy({x})"), b)


def excision_energy(b, radius):
    """Leading-order tangent energy inside the excised ball of the given radius."""
    return 2.0 * math.pi * radius * tangent_energy_integral(b)
