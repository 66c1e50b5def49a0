"""
Target geometry: the hyperbolic plane in horospherical coordinates (u, v) with metric
du² + e^{4u} dv².
"""
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from harmonic.Errors import ConfigurationError, GeometryError

if TYPE_CHECKING:
    from harmonic.HalfplaneSolver import MapField

LN2 = math.log(2.0)
# cosh(2d) above this switches to the logarithmic branch
COSH_SWITCH = 1e15
_LOG_S2_SWITCH = math.log((COSH_SWITCH - 1.0) / 2.0)


@dataclass(frozen=True)
class HPoint:
    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ConfigurationError(f"HPoint coordinates must be finite, got ({self.u}, {self.v})")

    def moved(self, c):
        """Image under the isometry (u, v) -> (u + c, e^{-2c} v)."""
        return HPoint(self.u + c, math.exp(-2.0 * c) * self.v)


def _log_sinh_abs(x):
    x = np.abs(x)
    with np.errstate(divide="ignore"):
        return x + np.log1p(-np.exp(-2.0 * x)) - LN2


def _distance_from_logs(du, log_twist):
    """
    sinh²(d) = sinh²(Δu) + e^{2(u₁+u₂)}Δv², which is cosh(2d) = cosh(2Δu) + 2e^{2(u₁+u₂)}Δv²
    rewritten so that neither side overflows. `log_twist` is ln(e^{2(u₁+u₂)}Δv²).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        log_s2 = np.logaddexp(2.0 * _log_sinh_abs(du), log_twist)
    big = log_s2 > _LOG_S2_SWITCH
    small_s = np.exp(0.5 * np.minimum(log_s2, _LOG_S2_SWITCH))
    return np.where(big, LN2 + 0.5 * log_s2, np.arcsinh(small_s))


def distance_arrays(u1, v1, u2, v2):
    u1, v1, u2, v2 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (u1, v1, u2, v2)))
    dv = np.abs(v1 - v2)
    with np.errstate(divide="ignore"):
        log_twist = 2.0 * (u1 + u2) + 2.0 * np.log(dv)
    return _distance_from_logs(u1 - u2, log_twist)


def distance(p: HPoint, q: HPoint) -> float:
    return float(distance_arrays(p.u, p.v, q.u, q.v))


def lambda_comparison(d):
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < 0) or np.any(np.isnan(d_arr)):
        raise ConfigurationError("lambda_comparison needs a nonnegative distance")
    out = np.sqrt(1.0 + d_arr * d_arr)
    return float(out) if out.ndim == 0 else out


def _same_grid(F, G):
    return F.U.shape == G.U.shape and np.array_equal(F.rho, G.rho) and np.array_equal(F.z, G.z)


def distance_field(F: "MapField", G: "MapField"):
    """
    Pointwise target distance between two fields sampled on the same grid. Fields carry
    U = u + ln ρ, so Δu = ΔU and the twist term picks up a ρ⁻⁴. On the axis the twist
    term is 0 when both maps take the same rod value and infinite otherwise.
    """
    if not _same_grid(F, G):
        raise GeometryError("distance_field needs fields on the same grid")
    rho = np.broadcast_to(F.rho[:, None], F.U.shape)
    dv = np.abs(F.v - G.v)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_twist = 2.0 * (F.U + G.U) - 4.0 * np.log(rho) + 2.0 * np.log(dv)
    log_twist = np.where(dv == 0.0, -np.inf, log_twist)
    return _distance_from_logs(F.U - G.U, log_twist)


def axisymmetric_laplacian(f, rho, z):
    """
    Δf = ∂²ρ f + (1/ρ)∂ρ f + ∂²z f at interior nodes (ρ > 0) of a tensor grid,
    three-point nonuniform differences; boundary rows/columns are NaN.
    """
    f = np.asarray(f, dtype=float)
    out = np.full(f.shape, np.nan)
    hm = (rho[1:-1] - rho[:-2])[:, None]
    hp = (rho[2:] - rho[1:-1])[:, None]
    km = (z[1:-1] - z[:-2])[None, :]
    kp = (z[2:] - z[1:-1])[None, :]
    c = f[1:-1, 1:-1]
    d2r = 2.0 * (f[2:, 1:-1] * hm + f[:-2, 1:-1] * hp - c * (hm + hp)) / (hm * hp * (hm + hp))
    d1r = (f[2:, 1:-1] * hm * hm - f[:-2, 1:-1] * hp * hp + c * (hp * hp - hm * hm)) / (hm * hp * (hm + hp))
    d2z = 2.0 * (f[1:-1, 2:] * km + f[1:-1, :-2] * kp - c * (km + kp)) / (km * kp * (km + kp))
    out[1:-1, 1:-1] = d2r + d1r / rho[1:-1, None] + d2z
    return out


def comparison_laplacian(F: "MapField", G: "MapField"):
    """Δ(Λ∘d) on the interior nodes; nonnegative up to O(h²) when F and G are harmonic."""
    lam = lambda_comparison(distance_field(F, G))
    return axisymmetric_laplacian(lam, F.rho, F.z)
