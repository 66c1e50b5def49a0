"""
Model maps: superpositions and cutoff blends of extreme Kerr constituents, their tension
fields, and the axis-geometry comparison bounds used to bound them.

A map evaluator is any callable (ρ, z) -> (U, v) on numpy arrays.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from harmonic import HyperbolicGeometry, KerrLibrary
from harmonic.Errors import ConfigurationError, GeometryError
from harmonic.KerrLibrary import KerrParams

MapEvaluator = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

ROD_MATCH_TOL = 1e-12


def smoothstep(t):
    """C² quintic ramp: 0 for t ≤ 0, 1 for t ≥ 1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def polar(rho, z, center):
    dz = np.asarray(z, dtype=float) - center
    rho = np.asarray(rho, dtype=float)
    return np.hypot(rho, dz), np.arctan2(rho, dz)


@dataclass(frozen=True)
class KerrMap:
    params: KerrParams

    @property
    def punctures(self):
        return (self.params.center_z,)

    def __call__(self, rho, z):
        return KerrLibrary.kerr_eval(self.params, rho, z)


@dataclass(frozen=True)
class SuperposedMap:
    """
    U = Σ U_i, v = Σ v_i + offset with every constituent centred so that its rods carry ±2J_i;
    on rod Γ_j the sum is exactly −2ΣJ + 4Σ_{i<j} J_i + offset.
    """
    constituents: Tuple[KerrParams, ...]
    offset: float = 0.0

    @property
    def punctures(self):
        return tuple(k.center_z for k in self.constituents)

    def __call__(self, rho, z):
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        U = np.zeros(rho.shape)
        v = np.full(rho.shape, self.offset)
        for k in self.constituents:
            Uk, vk = KerrLibrary.kerr_eval(k, rho, z)
            U += Uk
            v += vk
        return U, v


def superposition(config) -> SuperposedMap:
    constituents = tuple(KerrParams.from_angular_momentum(p.J, p.z) for p in config.punctures)
    return SuperposedMap(constituents, config.potential_shift)


@dataclass(frozen=True)
class CutoffFamily:
    """
    Partition of unity for a blend. Index 0 is the outer map (weight χ₀, radial about
    `center`); indices 1..n are the inner constituents from south to north, separated by
    angular sectors about `sector_centers`. Inside a ball of radius `ball_radius` about a
    sector centre the angular ramp is faded to ½ so that the weights stay smooth there.
    """
    delta: Optional[float]
    center: float
    sector_centers: Tuple[float, ...]
    sector_spec: Tuple[Tuple[float, float], ...]
    ball_radius: float = 0.0

    @property
    def n_inner(self):
        return len(self.sector_centers) + 1

    @property
    def radial(self):
        return self.delta is not None

    def chi0(self, rho, z):
        if not self.radial:
            return np.zeros(np.broadcast(rho, z).shape)
        r, _ = polar(rho, z, self.center)
        half = 0.5 * self.delta
        return smoothstep((r - half) / half)

    def sector_ramps(self, rho, z):
        """ω_i: 0 north of sector i, 1 south of it."""
        ramps = []
        for zc, (lo, hi) in zip(self.sector_centers, self.sector_spec):
            r, theta = polar(rho, z, zc)
            w = smoothstep((theta - lo) / (hi - lo))
            if self.ball_radius > 0:
                lam = smoothstep(r / self.ball_radius)
                w = lam * w + (1.0 - lam) * 0.5
            ramps.append(w)
        return ramps

    def angular(self, rho, z):
        shape = np.broadcast(rho, z).shape
        ramps = self.sector_ramps(rho, z)
        out = np.empty((self.n_inner,) + shape)
        rest = np.ones(shape)
        for i, w in enumerate(ramps):
            out[i] = rest * w
            rest = rest * (1.0 - w)
        out[-1] = rest
        return out

    def weights(self, rho, z):
        chi0 = self.chi0(rho, z)
        inner = self.angular(rho, z) * (1.0 - chi0)
        return np.concatenate([chi0[None], inner], axis=0)


@dataclass(frozen=True)
class BlendedMap:
    """Ξ = Σ χ_i Θ_i componentwise; Σχ_i = 1 so blending U or u = U − ln ρ is the same."""
    constituents: Tuple[MapEvaluator, ...]
    cutoffs: CutoffFamily
    punctures: Tuple[float, ...] = field(default=())

    def weights(self, rho, z):
        return self.cutoffs.weights(rho, z)

    def __call__(self, rho, z):
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        w = self.weights(rho, z)
        U = np.zeros(rho.shape)
        v = np.zeros(rho.shape)
        for wi, theta_i in zip(w, self.constituents):
            active = wi > 0.0
            if not np.any(active):
                continue
            Ui, vi = theta_i(rho[active], z[active])
            U[active] += wi[active] * Ui
            v[active] += wi[active] * vi
        return U, v


def _check_rods(south: KerrParams, north: KerrParams):
    if abs(south.rod_values[1] - north.rod_values[0]) > ROD_MATCH_TOL * max(1.0, abs(south.rod_values[1])):
        raise ConfigurationError("constituents disagree on the potential constant of their shared rod")


def build_multi_puncture_blend(kerrs: Sequence[KerrParams], collision_map: MapEvaluator, delta: float) -> BlendedMap:
    """
    Collision blend for N₁ ≥ 2 punctures inside B_{δ/4}(p₀): Kerr constituents near each
    puncture, the collision map outside B_δ, angular sectors of opening ϑ = π/(2(N₁−1))
    about the gap midpoints in between.
    """
    kerrs = sorted(kerrs, key=lambda k: k.center_z)
    if len(kerrs) < 2:
        raise ConfigurationError("a collision blend needs at least two punctures")
    if not delta > 0:
        raise ConfigurationError("delta must be positive")
    zs = np.array([k.center_z for k in kerrs])
    gaps = np.diff(zs)
    if np.any(gaps <= 0):
        raise ConfigurationError("blend constituents must sit at distinct points")
    if zs[-1] - zs[0] >= 0.5 * delta:
        raise ConfigurationError(f"puncture separation {zs[-1] - zs[0]} must be below δ/2 = {0.5 * delta}")
    for south, north in zip(kerrs[:-1], kerrs[1:]):
        _check_rods(south, north)
    if isinstance(collision_map, KerrMap):
        outer = collision_map.params
        tol = ROD_MATCH_TOL * max(1.0, abs(outer.rod_values[0]), abs(outer.rod_values[1]))
        if abs(outer.rod_values[0] - kerrs[0].rod_values[0]) > tol \
                or abs(outer.rod_values[1] - kerrs[-1].rod_values[1]) > tol:
            raise ConfigurationError("collision map disagrees with the outer rod constants")

    n1 = len(kerrs)
    p0 = 0.5 * (zs[0] + zs[-1])
    vartheta = math.pi / (2 * (n1 - 1))
    sectors = tuple((0.75 * math.pi - i * vartheta, 0.75 * math.pi - (i - 1) * vartheta) for i in range(1, n1))
    cutoffs = CutoffFamily(delta=delta, center=p0, sector_centers=tuple(0.5 * (zs[:-1] + zs[1:])),
                           sector_spec=sectors)
    constituents = (collision_map,) + tuple(KerrMap(k) for k in kerrs)
    return BlendedMap(constituents, cutoffs, tuple(zs) + (p0,))


def build_two_puncture_blend(k1: KerrParams, k2: KerrParams, collision_map: MapEvaluator, delta: float) -> BlendedMap:
    """Two punctures at p₀ ∓ 2η (η = gap/4); χ̃₁ ramps over θ ∈ [π/4, 3π/4] about p₀."""
    return build_multi_puncture_blend([k1, k2], collision_map, delta)


def build_cluster_blend(clusters: Sequence[MapEvaluator], rod_midpoints: Sequence[float], ball_radius: float,
                        punctures: Sequence[float] = ()) -> BlendedMap:
    """
    Blend of k separated clusters along the expanding rods between them: sectors of
    opening ϑ = π/(2k) at the rod midpoints, faded inside balls of radius ϱ.
    """
    k = len(clusters)
    mids = sorted(float(m) for m in rod_midpoints)
    if k < 2 or len(mids) != k - 1:
        raise ConfigurationError("a cluster blend needs k ≥ 2 clusters and k − 1 rod midpoints")
    if not ball_radius > 0:
        raise ConfigurationError("ball radius must be positive")
    if len(mids) > 1 and np.min(np.diff(mids)) <= 2 * ball_radius:
        raise ConfigurationError("balls about the rod midpoints overlap")
    vartheta = math.pi / (2 * k)
    sectors = tuple((0.75 * math.pi - i * vartheta, 0.75 * math.pi - (i - 1) * vartheta) for i in range(1, k))
    cutoffs = CutoffFamily(delta=None, center=0.5 * (mids[0] + mids[-1]), sector_centers=tuple(mids),
                           sector_spec=sectors, ball_radius=ball_radius)
    # outer slot is unused without a radial cutoff
    constituents = (clusters[0],) + tuple(clusters)
    return BlendedMap(constituents, cutoffs, tuple(punctures) + tuple(mids))


def tension_step(X, rho, z):
    """h = max(1e−4, 1e−3·min(r_i, ρ)) over the puncture/centre list of the map."""
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    scale = rho.copy()
    for p in getattr(X, "punctures", ()):
        scale = np.minimum(scale, np.hypot(rho, z - p))
    return np.maximum(1e-4, 1e-3 * scale)


def tension(X: MapEvaluator, rho, z):
    """
    |τ| = √(τ_u² + e^{4u}τ_v²), τ_u = ΔU − 2e^{4U}ρ⁻⁴|∇v|², τ_v = ∂²v − (3/ρ)∂ρv + ∂²zv + 4∇U·∇v
    by centered differences with a step scaled to the distance from axis and punctures.
    """
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(rho <= 0):
        raise GeometryError("tension is evaluated off the axis")
    for p in getattr(X, "punctures", ()):
        if np.any(np.hypot(rho, z - p) == 0):
            raise GeometryError("tension evaluated at a puncture")
    h = tension_step(X, rho, z)
    U0, v0 = X(rho, z)
    Urp, vrp = X(rho + h, z)
    Urm, vrm = X(rho - h, z)
    Uzp, vzp = X(rho, z + h)
    Uzm, vzm = X(rho, z - h)
    dUr, dvr = (Urp - Urm) / (2 * h), (vrp - vrm) / (2 * h)
    dUz, dvz = (Uzp - Uzm) / (2 * h), (vzp - vzm) / (2 * h)
    d2Ur, d2vr = (Urp - 2 * U0 + Urm) / h ** 2, (vrp - 2 * v0 + vrm) / h ** 2
    d2Uz, d2vz = (Uzp - 2 * U0 + Uzm) / h ** 2, (vzp - 2 * v0 + vzm) / h ** 2
    e4u = np.exp(4.0 * U0) / rho ** 4
    tau_u = d2Ur + dUr / rho + d2Uz - 2.0 * e4u * (dvr ** 2 + dvz ** 2)
    tau_v = d2vr - 3.0 * dvr / rho + d2vz + 4.0 * (dUr * dvr + dUz * dvz)
    return np.sqrt(tau_u ** 2 + e4u * tau_v ** 2)


@dataclass
class ComparisonReport:
    name: str
    samples: int
    in_region: int
    violations: int
    hypothesis_ok: bool
    worst: float

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        return {"name": self.name, "samples": self.samples, "in_region": self.in_region,
                "violations": self.violations, "hypothesis_ok": self.hypothesis_ok, "worst": self.worst,
                "passed": self.passed}


def axis_comparison_checks(p1: float, p2: float, p0: float, sample_points, delta: Optional[float] = None,
                          lam: float = 0.5, rtol: float = 1e-12):
    """
    Axis comparison bounds for punctures p₁ < p₂ with midpoint p₀ and η = (p₂ − p₁)/4:
    r₁/r₂ ≤ 5 on {z > p₀, r₂ > η}; 1/5 ≤ r₁/r₂ ≤ 5 outside both η-balls; and, when
    B_η(p_i) ⊂ B_{δ/4}(p₀), |λ ln r₁ + (1−λ) ln r₂ − ln r₀| ≤ ln 2 and |∇ln r_i| ≤ 2/r₀ outside
    B_{δ/2}(p₀). Points are (ρ, z) rows. Hypothesis violations are reported, not raised.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    rho, z = pts[:, 0], pts[:, 1]
    if p2 < p1:
        p1, p2 = p2, p1
    eta = 0.25 * (p2 - p1)
    scale = max(1.0, abs(p1), abs(p2))
    centred = abs(p0 - 0.5 * (p1 + p2)) <= 1e-12 * scale and eta > 0
    r1, r2, r0 = np.hypot(rho, z - p1), np.hypot(rho, z - p2), np.hypot(rho, z - p0)
    reports = {}

    region = (z > p0) & (r2 > eta)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = r1 / r2
    bad = region & (ratio > 5.0 * (1 + rtol))
    reports["ratio_upper"] = ComparisonReport("ratio_upper", len(rho), int(region.sum()), int(bad.sum()), centred,
                                              float(np.max(ratio[region])) if region.any() else 0.0)

    region = (r1 > eta) & (r2 > eta)
    bad = region & ((ratio > 5.0 * (1 + rtol)) | (ratio < 0.2 * (1 - rtol)))
    worst = float(np.max(np.maximum(ratio[region], 1.0 / ratio[region]))) if region.any() else 0.0
    reports["ratio_two_sided"] = ComparisonReport("ratio_two_sided", len(rho), int(region.sum()), int(bad.sum()),
                                                  centred, worst)

    if delta is not None:
        contained = max(abs(p1 - p0), abs(p2 - p0)) + eta <= 0.25 * delta * (1 + rtol)
        region = r0 > 0.5 * delta
        with np.errstate(divide="ignore"):
            mix = np.abs(lam * np.log(r1) + (1 - lam) * np.log(r2) - np.log(r0))
        grad = np.maximum(1.0 / r1, 1.0 / r2) * r0
        bad = region & ((mix > math.log(2.0) * (1 + rtol)) | (grad > 2.0 * (1 + rtol)))
        worst = float(np.max(mix[region])) if region.any() else 0.0
        reports["far_field"] = ComparisonReport("far_field", len(rho), int(region.sum()), int(bad.sum()),
                                                bool(contained and centred and 0 <= lam <= 1), worst)
    return reports


def asymptotic_distance(F: MapEvaluator, G: MapEvaluator, radii, center: float = 0.0, n_angles: int = 64):
    """
    Max target distance between two maps on spheres of the given radii (polar angles kept
    off the axis). Maps sharing all potential constants approach each other at infinity.
    """
    theta = math.pi * (np.arange(n_angles) + 0.5) / n_angles
    out = []
    for R in np.atleast_1d(radii):
        rho, z = R * np.sin(theta), center + R * np.cos(theta)
        UF, vF = F(rho, z)
        UG, vG = G(rho, z)
        d = HyperbolicGeometry.distance_arrays(UF - np.log(rho), vF, UG - np.log(rho), vG)
        out.append(float(np.max(d)))
    return np.array(out)
