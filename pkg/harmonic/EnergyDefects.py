"""
Post-processing of solved fields: renormalised energy, the α line integral and the rod
angle defects, tangent-parameter extraction, the mass lower bound and the sensitivity of
the solution to moving a puncture.
"""
import math
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy import optimize
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator
from scipy.special import roots_jacobi

from harmonic import HalfplaneSolver, KerrLibrary
from harmonic.Errors import ExtractionError, GeometryError, UnconvergedField
from harmonic.HalfplaneSolver import MapField, MIN_RADIUS
from harmonic.KerrLibrary import TangentMap
from utils import Logging

EIGHT_PI = 8.0 * math.pi
MIN_ARC_SAMPLES = 720
JACOBI_NODES = 16
RING_SAMPLES = 181
B_EDGE = 0.999
MASS_RTOL = 0.02


@dataclass
class EnergyReport:
    E_grid: float
    E_excision: List[float]
    E_total: float
    mass_bound: float

    def to_dict(self):
        return asdict(self)


@dataclass
class DefectReport:
    rod_defects: List[float]
    b: List[float]
    method_fit: List[float]
    consistency: float

    @property
    def defect_diffs(self):
        return list(np.diff(self.rod_defects))

    def to_dict(self):
        out = asdict(self)
        out["defect_diffs"] = self.defect_diffs
        return out


@dataclass
class SensitivityReport:
    puncture_index: int
    h: float
    misfit: float
    b_minus: float
    b_plus: float
    b_dot: float
    samples: int
    ring_radius: float
    translation_misfit: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _require_converged(F: MapField, what):
    if not F.converged:
        raise UnconvergedField(f"{what} needs a solved field (residual {F.residual_norm:.3e})")


def energy(F: MapField) -> EnergyReport:
    """
    Midpoint quadrature of 2π∫∫(|∇U|² + e^{4U}ρ⁻⁴|∇v|²)ρ dρ dz over the cells whose centre lies
    outside every excision disk, plus the leading-order tangent energy of each excised ball.
    """
    _require_converged(F, "energy")
    rho, z, U, v = F.rho, F.z, F.U, F.v
    eps = F.grid.excision_radius
    drho = np.diff(rho)[:, None]
    dz = np.diff(z)[None, :]
    rc = 0.5 * (rho[1:] + rho[:-1])[:, None]
    zc = 0.5 * (z[1:] + z[:-1])[None, :]

    def grad(f):
        fr = (f[1:, 1:] + f[1:, :-1] - f[:-1, 1:] - f[:-1, :-1]) / (2.0 * drho)
        fz = (f[1:, 1:] + f[:-1, 1:] - f[1:, :-1] - f[:-1, :-1]) / (2.0 * dz)
        return fr, fz

    retained = np.ones(np.broadcast(rc, zc).shape, dtype=bool)
    for zi in F.config.zs:
        retained &= np.hypot(rc, zc - zi) >= eps
    Ur, Uz = grad(U)
    vr, vz = grad(v)
    Um = 0.25 * (U[1:, 1:] + U[1:, :-1] + U[:-1, 1:] + U[:-1, :-1])
    dens_U = (Ur ** 2 + Uz ** 2) * rc
    with np.errstate(over="ignore", invalid="ignore"):
        dens_v = np.exp(4.0 * Um) * (vr ** 2 + vz ** 2) / rc ** 3
    if dens_v.shape[0] >= 3:
        t = (rc[0] - rc[1]) / (rc[2] - rc[1])
        layer = dens_v[1] + (dens_v[2] - dens_v[1]) * t
        ok = retained[1] & retained[2]
        dens_v[0] = np.where(ok, np.clip(layer, 0.0, None), 0.0)
    dens = np.where(retained, dens_U + dens_v, 0.0)
    E_grid = 2.0 * math.pi * float(np.sum(dens * drho * dz))
    b = F.b if len(F.b) else np.zeros(0)
    E_exc = [float(KerrLibrary.excision_energy(float(bi), eps)) for bi in b]
    E_total = E_grid + sum(E_exc)
    return EnergyReport(E_grid=E_grid, E_excision=E_exc, E_total=E_total, mass_bound=E_total / EIGHT_PI)


def alpha_gradient(F: MapField):
    """Nodal (∂ρα, ∂zα); both vanish on the axis."""
    U, v = F.U, F.v
    Ur, Uz = np.gradient(U, F.rho, F.z, edge_order=2)
    vr, vz = np.gradient(v, F.rho, F.z, edge_order=2)
    rho = F.rho[:, None]
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        w = np.exp(4.0 * U) / rho ** 4
        a_rho = rho * (Ur ** 2 - Uz ** 2 + w * (vr ** 2 - vz ** 2))
        a_z = 2.0 * rho * (Ur * Uz + w * vr * vz)
    a_rho[0, :] = 0.0
    a_z[0, :] = 0.0
    return np.nan_to_num(a_rho), np.nan_to_num(a_z)


def alpha_line_integral(F: MapField, center_z: float, radius: float, n_arc: int = MIN_ARC_SAMPLES):
    """
    ∫dα along the semicircle about (0, center_z) from the south axis point to the north one:
    R∫₀^π(∂zα sin θ − ∂ρα cos θ)dθ. The middle is a composite trapezoid; the end segments
    carry the ρ^{-1/2} endpoint behaviour through Gauss-Jacobi nodes.
    """
    n_arc = max(int(n_arc), MIN_ARC_SAMPLES)
    a_rho, a_z = alpha_gradient(F)
    grid = (F.rho, F.z)
    interp_rho = RegularGridInterpolator(grid, a_rho)
    interp_z = RegularGridInterpolator(grid, a_z)

    def integrand(theta):
        pts = np.column_stack([radius * np.sin(theta), center_z + radius * np.cos(theta)])
        return radius * (interp_z(pts) * np.sin(theta) - interp_rho(pts) * np.cos(theta))

    theta_e = 4.0 * math.pi / n_arc
    mid = np.linspace(theta_e, math.pi - theta_e, n_arc)
    total = float(np.trapz(integrand(mid), mid))
    x, w = roots_jacobi(JACOBI_NODES, 0.0, -0.5)
    t = 0.5 * theta_e * (1.0 + x)
    weights = 0.5 * theta_e * w * np.sqrt(1.0 + x)
    total += float(np.sum(weights * integrand(t)))
    total += float(np.sum(weights * integrand(math.pi - t)))
    return total


def alpha_defect(F: MapField, puncture_index: int, radius: float, n_arc: int = MIN_ARC_SAMPLES):
    """ΔB_i = B_{i+1} − B_i from the semicircle of the given radius about puncture i."""
    zs = F.config.zs
    eps = F.grid.excision_radius
    zi = zs[puncture_index]
    if not radius > eps:
        raise GeometryError(f"semicircle radius {radius} must exceed the excision radius {eps}")
    if radius >= F.rho[-1] or zi - radius <= F.z[0] or zi + radius >= F.z[-1]:
        raise GeometryError(f"semicircle of radius {radius} about z={zi} leaves the grid")
    others = np.delete(zs, puncture_index)
    if np.any(np.abs(others - zi) <= radius + eps):
        raise GeometryError(f"semicircle of radius {radius} about z={zi} meets another puncture")
    return alpha_line_integral(F, zi, radius, n_arc)


def _window(F: MapField, center_z, radius, margin=4):
    i1 = min(len(F.rho), int(np.searchsorted(F.rho, radius, "right")) + margin)
    j0 = max(0, int(np.searchsorted(F.z, center_z - radius, "left")) - margin)
    j1 = min(len(F.z), int(np.searchsorted(F.z, center_z + radius, "right")) + margin)
    return slice(0, i1), slice(j0, j1)


def regular_part_spline(F: MapField, center_z, radius):
    """Bicubic spline of W = U − ln r about (0, center_z) on a window covering the given radius."""
    si, sj = _window(F, center_z, radius)
    rho, z = F.rho[si], F.z[sj]
    r = np.maximum(np.hypot(rho[:, None], z[None, :] - center_z), MIN_RADIUS)
    return RectBivariateSpline(rho, z, F.U[si, sj] - np.log(r))


def ring_samples(center_z, radius, n=RING_SAMPLES, open_ends=False):
    theta = np.linspace(0.0, math.pi, n + 2)[1:-1] if open_ends else np.linspace(0.0, math.pi, n)
    return theta, radius * np.sin(theta), center_z + radius * np.cos(theta)


def tangent_fit(F: MapField, puncture_index: int, ring_factor: float = 4.0):
    """
    Golden-section fit of b in W(θ) = U − ln r_i ≈ Ū(θ, b) on the ring r_i = ring_factor·ε.
    Returns (b, rms misfit).
    """
    p = F.config.punctures[puncture_index]
    radius = ring_factor * F.grid.excision_radius
    theta, rho_s, z_s = ring_samples(p.z, radius)
    W = regular_part_spline(F, p.z, radius).ev(rho_s, z_s)
    a = KerrLibrary.tangent_scale(p.J)
    c = np.cos(theta)

    def misfit(s):
        ub, _ = KerrLibrary.tangent_values(a, math.tanh(s), c)
        return float(np.sqrt(np.mean((W - ub) ** 2)))

    res = optimize.minimize_scalar(misfit, bracket=(-0.5, 0.5), method="golden", tol=1e-10)
    b = math.tanh(res.x)
    if not np.isfinite(b) or abs(b) > B_EDGE:
        raise ExtractionError(f"tangent fit for puncture {puncture_index} ran to the edge (b={b:.6f})")
    return b, float(res.fun)


def defect_report(F: MapField, radius_factor: float = 4.0, n_arc: int = MIN_ARC_SAMPLES) -> DefectReport:
    eps = F.grid.excision_radius
    diffs = np.array([alpha_defect(F, i, radius_factor * eps, n_arc) for i in range(F.config.N)])
    rods = np.concatenate([[0.0], np.cumsum(diffs)])
    b = np.tanh(0.5 * diffs)
    if F.b_fit is not None and len(F.b_fit) == F.config.N:
        fits = np.asarray(F.b_fit, dtype=float)
    else:
        fits = np.array([tangent_fit(F, i, radius_factor)[0] for i in range(F.config.N)])
    consistency = float(np.max(np.abs(b - fits))) if len(b) else 0.0
    return DefectReport(rod_defects=rods.tolist(), b=b.tolist(), method_fit=fits.tolist(), consistency=consistency)


def mass_bound_check(F: MapField, report: Optional[EnergyReport] = None, rtol: float = MASS_RTOL):
    """(E/8π, √|ΣJ|, E/8π ≥ √|ΣJ|·(1 − rtol))."""
    report = report or energy(F)
    sqrt_j = math.sqrt(abs(float(np.sum(F.config.Js))))
    value = report.mass_bound
    return value, sqrt_j, bool(value >= sqrt_j * (1.0 - rtol))


def summary(F: MapField, radius_factor: float = 4.0):
    """Summary JSON document of a solved field."""
    report = energy(F)
    value, sqrt_j, ok = mass_bound_check(F, report)
    defects = defect_report(F, radius_factor) if F.config.N else DefectReport([0.0], [], [], 0.0)
    return {"energy": report.E_total, "energy_grid": report.E_grid, "energy_excision": report.E_excision,
            "mass_bound": value, "sqrt_J_total": sqrt_j, "mass_bound_satisfied": ok, "b": defects.method_fit,
            "b_from_defects": defects.b, "defect_diffs": defects.defect_diffs, "consistency": defects.consistency,
            "residual": F.residual_norm, "iterations": F.iterations}


def _ring_values(F: MapField, pos, rho_s, z_s, radius):
    """U and ∂zU of F on the ring points, with the logarithm about the field's own puncture taken exactly."""
    spline = regular_part_spline(F, pos, radius)
    r2 = rho_s ** 2 + (z_s - pos) ** 2
    return spline.ev(rho_s, z_s) + 0.5 * np.log(r2), spline.ev(rho_s, z_s, dy=1) + (z_s - pos) / r2


def sensitivity_check(config: HalfplaneSolver.PunctureConfig, puncture_index: int, h: float,
                      grid: HalfplaneSolver.GridSpec, opts: Optional[HalfplaneSolver.SolverOptions] = None,
                      ring_factor: float = 4.0, metrics=None, half_step: bool = False) -> SensitivityReport:
    """
    Moves puncture i by ±h on a common grid, differences U on the ring r_i = ring_factor·ε about
    the unmoved position and compares with the leading profile
    −(z − z_i)/r² + (ρ/r²)∂θŪ + ḃ∂bŪ.
    A lone puncture only translates, so there U̇ is also compared with −∂zU of the unmoved solve
    (translation_misfit). half_step repeats the check at h/2 and records both misfits in `extra`.
    """
    zs = config.zs
    zi = float(zs[puncture_index])
    eps = grid.excision_radius
    if not 0 < h < 0.5 * ring_factor * eps:
        raise GeometryError(f"step h={h} must lie in (0, ring radius/2)")
    fields = []
    for sign in (-1.0, 1.0):
        moved = zs.copy()
        moved[puncture_index] = zi + sign * h
        cfg = config.moved(moved)
        g = replace(grid, extra_centers=tuple(grid.extra_centers) + (zi - sign * h,))
        F = HalfplaneSolver.solve(HalfplaneSolver.discretize(cfg, g), opts, metrics=metrics)
        _require_converged(F, "sensitivity check")
        fields.append(F)
    F_minus, F_plus = fields

    radius = ring_factor * eps
    theta, rho_s, z_s = ring_samples(zi, radius, open_ends=True)
    U_minus, _ = _ring_values(F_minus, zi - h, rho_s, z_s, radius + h)
    U_plus, _ = _ring_values(F_plus, zi + h, rho_s, z_s, radius + h)
    U_dot = (U_plus - U_minus) / (2.0 * h)
    scale = float(np.linalg.norm(U_dot))

    def fitted(F):
        return float(F.b_fit[puncture_index]) if F.b_fit is not None else float(F.b[puncture_index])

    b_minus, b_plus = fitted(F_minus), fitted(F_plus)
    b_dot = (b_plus - b_minus) / (2.0 * h)
    tm = TangentMap.for_puncture(config.punctures[puncture_index].J, 0.5 * (b_minus + b_plus))
    du_dtheta, _, du_db, _ = KerrLibrary.tangent_derivatives(tm, theta)
    r2 = radius * radius
    predicted = -(z_s - zi) / r2 + rho_s / r2 * du_dtheta + b_dot * du_db
    misfit = float(np.linalg.norm(U_dot - predicted) / scale)

    translation_misfit = None
    if config.N == 1:
        g = replace(grid, extra_centers=tuple(grid.extra_centers) + (zi - h, zi + h))
        F0 = HalfplaneSolver.solve(HalfplaneSolver.discretize(config, g), opts, metrics=metrics)
        _require_converged(F0, "sensitivity check")
        _, dU_dz = _ring_values(F0, zi, rho_s, z_s, radius)
        translation_misfit = float(np.linalg.norm(U_dot + dU_dz) / scale)
    Logging.info(f"sensitivity of puncture {puncture_index} (h={h}): misfit {misfit:.3e}, ḃ={b_dot:.4g}"
                 + (f", translation misfit {translation_misfit:.3e}" if translation_misfit is not None else ""))
    report = SensitivityReport(puncture_index=puncture_index, h=h, misfit=misfit, b_minus=b_minus, b_plus=b_plus,
                               b_dot=b_dot, samples=len(theta), ring_radius=radius,
                               translation_misfit=translation_misfit)
    if half_step:
        half = sensitivity_check(config, puncture_index, 0.5 * h, grid, opts, ring_factor, metrics)
        report.extra.update(half_step_misfit=half.misfit, half_step_translation_misfit=half.translation_misfit,
                            half_step_ratio=half.misfit / misfit if misfit > 0 else math.inf)
    return report
