"""
Finite-volume discretisation and damped Newton solve of the harmonic map system in the
(U, v) unknowns on the (ρ, z) half-plane, with the punctures excised.

The discrete equations are the Euler-Lagrange equations of the discrete energy
    E = 2π Σ_faces [ wU (ΔU)² + wv e^{2(U_a + U_b)} (Δv)² ]
so the Newton merit function and the post-processed energy are the same object.
"""
import math
import time
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import factorized, spsolve

from harmonic import ModelMaps
from harmonic.Errors import ConfigurationError, IterationLimit, SolverDivergence
from harmonic.KerrLibrary import TangentMap, tangent_values
from utils import Logging

TWO_PI = 2.0 * math.pi
FOUR_PI = 4.0 * math.pi
BISECTION_STEPS = 80
MIN_RADIUS = 1e-300
MAX_HALVINGS = 30
ENERGY_SLACK = 1e-13
DIVERGENCE_WINDOW = 20
STALL_FACTOR = 1e3


@dataclass(frozen=True)
class Puncture:
    z: float
    J: float

    def __post_init__(self):
        if not (math.isfinite(self.z) and math.isfinite(self.J)):
            raise ConfigurationError(f"puncture needs finite z and J, got ({self.z}, {self.J})")
        if self.J == 0:
            raise ConfigurationError(f"puncture at z={self.z} has zero angular momentum")


@dataclass(frozen=True)
class PunctureConfig:
    punctures: Tuple[Puncture, ...] = ()
    potential_shift: float = 0.0

    def __post_init__(self):
        zs = [p.z for p in self.punctures]
        if any(b <= a for a, b in zip(zs[:-1], zs[1:])):
            raise ConfigurationError(f"puncture positions must be strictly increasing, got {zs}")

    @classmethod
    def from_lists(cls, zs: Sequence[float], Js: Sequence[float], potential_shift: float = 0.0):
        if len(zs) != len(Js):
            raise ConfigurationError("need one angular momentum per puncture")
        return cls(tuple(Puncture(float(z), float(J)) for z, J in zip(zs, Js)), potential_shift)

    @property
    def N(self):
        return len(self.punctures)

    @property
    def zs(self):
        return np.array([p.z for p in self.punctures], dtype=float)

    @property
    def Js(self):
        return np.array([p.J for p in self.punctures], dtype=float)

    @property
    def potential_constants(self):
        """c_0..c_N on the rods from south to north; c_{j+1} − c_j = 4J_j, symmetric about the shift."""
        Js = self.Js
        c0 = self.potential_shift - 2.0 * Js.sum()
        return np.concatenate([[c0], c0 + 4.0 * np.cumsum(Js)])

    @property
    def center(self):
        """|J|-weighted centre of the punctures (0 with none)."""
        if self.N == 0:
            return 0.0
        w = np.abs(self.Js)
        return float(np.sum(w * self.zs) / w.sum())

    def moved(self, zs: Sequence[float]):
        return PunctureConfig.from_lists(zs, self.Js, self.potential_shift)

    def shifted(self, c: float):
        return replace(self, potential_shift=self.potential_shift + c)

    def mirrored(self):
        """Image under z -> −z; the map transforms as (U, v) -> (U(ρ, −z), −v(ρ, −z))."""
        return PunctureConfig.from_lists(-self.zs[::-1], self.Js[::-1], -self.potential_shift)


@dataclass(frozen=True)
class GridSpec:
    rho_max: float = 200.0
    z_min: float = -200.0
    z_max: float = 200.0
    n_rho: int = 160
    n_z: int = 320
    excision_radius: float = 0.005
    grading: float = 1.0
    cluster_offset: Optional[float] = None
    extra_centers: Tuple[float, ...] = ()

    @classmethod
    def centered_on(cls, config: PunctureConfig, half_width: float, **kwargs):
        c = config.center
        return cls(z_min=c - half_width, z_max=c + half_width, **kwargs)

    @property
    def offset(self):
        return self.cluster_offset if self.cluster_offset is not None else 0.25 * self.excision_radius

    @property
    def center(self):
        return 0.5 * (self.z_min + self.z_max)

    def shifted(self, dz: float):
        return replace(self, z_min=self.z_min + dz, z_max=self.z_max + dz,
                       extra_centers=tuple(c + dz for c in self.extra_centers))

    def recentered(self, center: float):
        return self.shifted(center - self.center)


class NodeKind(IntEnum):
    INTERIOR = 0
    AXIS = 1
    EXCISED = 2
    OUTER = 3


def graded_nodes(lo: float, hi: float, n: int, centers=(), grading: float = 1.0, ell: float = 1.0):
    """
    Nodes x_0 = lo < ... < x_{n−1} = hi equidistributing the density
    Φ(x) = (x − lo)/L + g Σ_c sign(x − c) ln(1 + |x − c|/ℓ), which clusters like ℓ + |x − c| near each centre.
    """
    length = hi - lo
    centers = np.asarray([c for c in centers if lo - length <= c <= hi + length], dtype=float)

    def phi(x):
        out = (x - lo) / length
        if grading > 0 and centers.size:
            d = x[:, None] - centers[None, :]
            out = out + grading * np.sum(np.sign(d) * np.log1p(np.abs(d) / ell), axis=1)
        return out

    ends = phi(np.array([lo, hi]))
    targets = np.linspace(ends[0], ends[1], n)
    left, right = np.full(n, lo), np.full(n, hi)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (left + right)
        below = phi(mid) < targets
        left = np.where(below, mid, left)
        right = np.where(below, right, mid)
    x = 0.5 * (left + right)
    x[0], x[-1] = lo, hi
    return x


def grid_nodes(config: PunctureConfig, grid: GridSpec):
    ell = grid.offset
    rho_centers = [0.0] if config.N else []
    z_centers = list(config.zs) + list(grid.extra_centers)
    rho = graded_nodes(0.0, grid.rho_max, grid.n_rho, rho_centers, grid.grading, ell)
    z = graded_nodes(grid.z_min, grid.z_max, grid.n_z, z_centers, grid.grading, ell)
    return rho, z


def _spacing_near(nodes, center, reach):
    left, right = nodes[:-1], nodes[1:]
    near = (right >= center - reach) & (left <= center + reach)
    return float(np.max(right[near] - left[near])) if np.any(near) else 0.0


def validate_geometry(config: PunctureConfig, grid: GridSpec):
    """Raises ConfigurationError unless the grid can carry the configuration; returns the nodes."""
    eps = grid.excision_radius
    if grid.n_rho < 3 or grid.n_z < 3:
        raise ConfigurationError("grid needs at least 3 nodes in each direction")
    if not (grid.rho_max > 0 and grid.z_max > grid.z_min):
        raise ConfigurationError("grid extents must be positive")
    if not eps > 0 or eps >= grid.rho_max:
        raise ConfigurationError(f"excision radius must lie in (0, rho_max), got {eps}")
    if grid.grading < 0 or grid.offset <= 0:
        raise ConfigurationError("grading must be nonnegative and the cluster offset positive")
    zs = config.zs
    for zi in zs:
        if not (grid.z_min + eps < zi < grid.z_max - eps):
            raise ConfigurationError(f"puncture z={zi} is outside the domain or its excision touches the boundary")
    if np.any(np.diff(zs) <= 2.0 * eps):
        raise ConfigurationError(f"excision disks of radius {eps} overlap")
    rho, z = grid_nodes(config, grid)
    if np.any(np.diff(rho) <= 0) or np.any(np.diff(z) <= 0):
        raise ConfigurationError("grid nodes are not strictly increasing")
    limit = 0.25 * eps * (1.0 + 1e-9)
    if config.N:
        h_rho = _spacing_near(rho, 0.0, 1.5 * eps)
        if h_rho > limit:
            raise ConfigurationError(f"ρ spacing {h_rho:.3g} near the axis exceeds ε/4; raise n_rho or grading")
    for zi in zs:
        h_z = _spacing_near(z, zi, 1.5 * eps)
        if h_z > limit:
            raise ConfigurationError(f"z spacing {h_z:.3g} near puncture z={zi} exceeds ε/4; raise n_z or grading")
    return rho, z


def _dual_widths(x):
    w = np.empty_like(x)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[0] = 0.5 * (x[1] - x[0])
    w[-1] = 0.5 * (x[-1] - x[-2])
    return w


class HalfPlaneProblem:
    """Node classification, face weights, cell volumes and boundary data for one configuration and grid."""

    def __init__(self, config: PunctureConfig, grid: GridSpec):
        self.config = config
        self.grid = grid
        self.rho, self.z = validate_geometry(config, grid)
        nr, nz = len(self.rho), len(self.z)
        self.shape = (nr, nz)
        self.size = nr * nz
        R, Z = np.meshgrid(self.rho, self.z, indexing="ij")
        self.R, self.Z = R, Z

        eps = grid.excision_radius
        self.owner = np.full(self.shape, -1, dtype=int)
        for i, zi in enumerate(config.zs):
            self.owner[np.hypot(R, Z - zi) < eps] = i
        kind = np.full(self.shape, NodeKind.INTERIOR, dtype=np.int8)
        kind[0, :] = NodeKind.AXIS
        kind[self.owner >= 0] = NodeKind.EXCISED
        kind[-1, :] = NodeKind.OUTER
        kind[:, 0] = NodeKind.OUTER
        kind[:, -1] = NodeKind.OUTER
        self.owner[kind == NodeKind.OUTER] = -1
        self.kind = kind

        flat_kind = kind.ravel()
        self.free_U = np.flatnonzero((flat_kind == NodeKind.INTERIOR) | (flat_kind == NodeKind.AXIS))
        self.free_v = np.flatnonzero(flat_kind == NodeKind.INTERIOR)
        self.rod = np.searchsorted(config.zs, self.z, side="left")

        self._build_weights()
        self.sup_U, self.sup_v = self._superposition_values()

    def _build_weights(self):
        rho, z = self.rho, self.z
        nr, nz = self.shape
        half = 0.5 * (rho[1:] + rho[:-1])
        lower = np.concatenate([[0.0], half])
        upper = np.concatenate([half, [rho[-1]]])
        area = 0.5 * (upper ** 2 - lower ** 2)
        with np.errstate(divide="ignore"):
            inv_moment = 0.5 * (np.where(lower > 0, lower ** -2.0, 0.0) - upper ** -2.0)
        inv_moment[0] = 0.0
        dz_dual = _dual_widths(z)
        drho = np.diff(rho)
        dz = np.diff(z)

        idx = np.arange(self.size).reshape(self.shape)
        a_r, b_r = idx[:-1, :].ravel(), idx[1:, :].ravel()
        wU_r = (half[:, None] * dz_dual[None, :] / drho[:, None]).ravel()
        wv_r = (4.0 * dz_dual[None, :] / (rho[1:] ** 4 - rho[:-1] ** 4)[:, None]).ravel()
        a_z, b_z = idx[:, :-1].ravel(), idx[:, 1:].ravel()
        wU_z = (area[:, None] / dz[None, :]).ravel()
        wv_z = (inv_moment[:, None] / dz[None, :]).ravel()

        a = np.concatenate([a_r, a_z])
        b = np.concatenate([b_r, b_z])
        excised = (self.kind == NodeKind.EXCISED).ravel()
        keep = ~(excised[a] & excised[b])
        self.edge_a, self.edge_b = a[keep], b[keep]
        self.wU = np.concatenate([wU_r, wU_z])[keep]
        self.wv = np.concatenate([wv_r, wv_z])[keep]
        self.vol_U = (area[:, None] * dz_dual[None, :]).ravel()
        self.vol_v = (inv_moment[:, None] * dz_dual[None, :]).ravel()

    def _superposition_values(self):
        U = np.zeros(self.size)
        v = np.zeros(self.size)
        live = (self.kind != NodeKind.EXCISED).ravel()
        sup = ModelMaps.superposition(self.config)
        U[live], v[live] = sup(self.R.ravel()[live], self.Z.ravel()[live])
        return U, v

    def excision_values(self, b):
        """Tangent-map data U = ln r + Ū(θ, b_i), v = mid_i ± v̄(θ, b_i) at the excised nodes."""
        b = np.zeros(self.config.N) if b is None else np.asarray(b, dtype=float)
        cs = self.config.potential_constants
        flat_owner = self.owner.ravel()
        idx = np.flatnonzero(flat_owner >= 0)
        U, v = np.empty(idx.size), np.empty(idx.size)
        for i, p in enumerate(self.config.punctures):
            tm = TangentMap.for_puncture(p.J, float(b[i]))
            sel = flat_owner[idx] == i
            rho = self.R.ravel()[idx[sel]]
            dz = self.Z.ravel()[idx[sel]] - p.z
            r = np.maximum(np.hypot(rho, dz), MIN_RADIUS)
            ub, vb = tangent_values(tm.a, tm.b, dz / r)
            U[sel] = np.log(r) + ub
            v[sel] = 0.5 * (cs[i] + cs[i + 1]) + math.copysign(1.0, p.J) * vb
        return idx, U, v

    def apply_boundary(self, U, v, b=None):
        """Overwrites the fixed entries of flat U, v in place and returns them."""
        flat_kind = self.kind.ravel()
        outer = flat_kind == NodeKind.OUTER
        U[outer] = self.sup_U[outer]
        v[outer] = self.sup_v[outer]
        axis = np.flatnonzero(flat_kind == NodeKind.AXIS)
        v[axis] = self.config.potential_constants[self.rod[axis % self.shape[1]]]
        idx, Ue, ve = self.excision_values(b)
        U[idx] = Ue
        v[idx] = ve
        return U, v

    def initial_state(self, b=None):
        return self.apply_boundary(self.sup_U.copy(), self.sup_v.copy(), b)

    def apply_laplacian(self, f):
        """Finite-volume Δf; exact for ρ² and z² at interior and axis nodes."""
        f = np.asarray(f, dtype=float).ravel()
        flux = self.wU * (f[self.edge_b] - f[self.edge_a])
        acc = np.bincount(self.edge_a, flux, self.size) - np.bincount(self.edge_b, flux, self.size)
        out = np.zeros(self.size)
        ok = self.vol_U > 0
        out[ok] = acc[ok] / self.vol_U[ok]
        return out.reshape(self.shape)

    def _face_terms(self, U, v):
        a, b = self.edge_a, self.edge_b
        dU = U[b] - U[a]
        dv = v[b] - v[a]
        with np.errstate(over="ignore"):
            q = self.wv * np.exp(2.0 * (U[a] + U[b]))
        return dU, dv, q

    def energy(self, U, v):
        dU, dv, q = self._face_terms(U, v)
        with np.errstate(over="ignore", invalid="ignore"):
            return TWO_PI * float(np.sum(self.wU * dU * dU) + np.sum(q * dv * dv))

    def gradient(self, U, v):
        a, b, n = self.edge_a, self.edge_b, self.size
        dU, dv, q = self._face_terms(U, v)
        tU = 2.0 * self.wU * dU
        tc = 2.0 * q * dv * dv
        tv = 2.0 * q * dv
        gU = np.bincount(b, tU, n) - np.bincount(a, tU, n) + np.bincount(a, tc, n) + np.bincount(b, tc, n)
        gv = np.bincount(b, tv, n) - np.bincount(a, tv, n)
        return TWO_PI * gU, TWO_PI * gv

    def hessian(self, U, v, coupled=True):
        """Hessian of the energy over all 2n unknowns (U first, then v) as CSR."""
        a, b, n = self.edge_a, self.edge_b, self.size
        dU, dv, q = self._face_terms(U, v)
        w = 2.0 * self.wU
        c = 4.0 * q * dv * dv
        s = 2.0 * q
        rows = [a, b, a, b, a, b, a, b, n + a, n + b, n + a, n + b]
        cols = [a, b, b, a, a, b, b, a, n + a, n + b, n + b, n + a]
        vals = [w, w, -w, -w, c, c, c, c, s, s, -s, -s]
        if coupled:
            m = 4.0 * q * dv
            rows += [a, n + a, a, n + b, b, n + a, b, n + b]
            cols += [n + a, a, n + b, a, n + a, b, n + b, b]
            vals += [-m, -m, m, m, -m, -m, m, m]
        H = sparse.coo_matrix((TWO_PI * np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(2 * n, 2 * n))
        return H.tocsr()

    @property
    def free(self):
        return np.concatenate([self.free_U, self.size + self.free_v])

    def residual_arrays(self, U, v):
        gU, gv = self.gradient(U, v)
        res_U = np.zeros(self.size)
        res_v = np.zeros(self.size)
        res_U[self.free_U] = -gU[self.free_U] / (FOUR_PI * self.vol_U[self.free_U])
        fv = self.free_v
        with np.errstate(over="ignore"):
            res_v[fv] = -gv[fv] / (FOUR_PI * np.exp(4.0 * U[fv]) * self.vol_v[fv])
        return res_U, res_v


def discretize(config: PunctureConfig, grid: GridSpec) -> HalfPlaneProblem:
    return HalfPlaneProblem(config, grid)


@dataclass
class SolverOptions:
    tol: float = 1e-6
    max_iters: int = 60
    damping: float = 1.0
    armijo: float = 1e-4
    b_tol: float = 1e-4
    b_max_rounds: int = 25
    fit_ring_factor: float = 4.0
    linear_solver: str = "direct"
    gs_sweeps: int = 400

    def __post_init__(self):
        if self.linear_solver not in ("direct", "redblack"):
            raise ConfigurationError(f"unknown linear solver {self.linear_solver!r}")
        if not (self.tol > 0 and self.max_iters >= 1 and 0 < self.damping <= 1):
            raise ConfigurationError("solver needs tol > 0, max_iters ≥ 1 and damping in (0, 1]")


@dataclass
class MapField:
    U: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    z: np.ndarray
    grid: GridSpec
    config: PunctureConfig
    kind: np.ndarray
    b: np.ndarray
    b_fit: Optional[np.ndarray] = None
    converged: bool = False
    residual_norm: float = math.inf
    iterations: int = 0
    energy_history: list = field(default_factory=list)
    problem: Optional[HalfPlaneProblem] = None

    @property
    def rho_grid(self):
        return np.broadcast_to(self.rho[:, None], self.U.shape)

    @property
    def z_grid(self):
        return np.broadcast_to(self.z[None, :], self.U.shape)

    def with_values(self, U, v):
        return replace(self, U=U, v=v, converged=False, residual_norm=math.inf, energy_history=[])


def _field_from_flat(problem, U, v, b, **kwargs):
    return MapField(U=U.reshape(problem.shape).copy(), v=v.reshape(problem.shape).copy(), rho=problem.rho,
                    z=problem.z, grid=problem.grid, config=problem.config, kind=problem.kind,
                    b=np.asarray(b, dtype=float).copy(), problem=problem, **kwargs)


def sample_field(problem: HalfPlaneProblem, evaluator, b=None, converged=False) -> MapField:
    """Field with U, v from a map evaluator off the excision disks and tangent data inside them."""
    b = np.zeros(problem.config.N) if b is None else np.asarray(b, dtype=float)
    U = np.zeros(problem.size)
    v = np.zeros(problem.size)
    live = (problem.kind != NodeKind.EXCISED).ravel()
    U[live], v[live] = evaluator(problem.R.ravel()[live], problem.Z.ravel()[live])
    idx, Ue, ve = problem.excision_values(b)
    U[idx], v[idx] = Ue, ve
    out = _field_from_flat(problem, U, v, b, converged=converged)
    out.residual_norm = residual_norm(out)
    return out


def _problem_of(F: MapField) -> HalfPlaneProblem:
    return F.problem if F.problem is not None else discretize(F.config, F.grid)


def residual(F: MapField, weighted=False):
    """
    (res_U, res_v) on the grid: cell averages of ΔU − 2e^{4U}ρ⁻⁴|∇v|² at the free U nodes and of
    ∂²v − (3/ρ)∂ρv + ∂²zv + 4∇U·∇v at the free v nodes, zero elsewhere. With weighted=True the
    v residual is scaled by e^{2u} = e^{2U}/ρ².
    """
    problem = _problem_of(F)
    U, v = F.U.ravel(), F.v.ravel()
    res_U, res_v = problem.residual_arrays(U, v)
    if weighted:
        fv = problem.free_v
        rho = problem.R.ravel()[fv]
        res_v[fv] = res_v[fv] * np.exp(2.0 * U[fv]) / rho ** 2
    return res_U.reshape(problem.shape), res_v.reshape(problem.shape)


def residual_norm(F: MapField):
    res_U, res_v = residual(F)
    return float(max(np.max(np.abs(res_U)), np.max(np.abs(res_v))))


def field_table(F: MapField):
    """Rows (rho, z, U, v, res_U, res_v) ordered by z, then by ρ within each z."""
    res_U, res_v = residual(F)
    R, Z = np.meshgrid(F.rho, F.z, indexing="xy")
    cols = [R, Z, F.U.T, F.v.T, res_U.T, res_v.T]
    return np.column_stack([c.ravel() for c in cols])


def transfer(F: MapField, problem: HalfPlaneProblem) -> Tuple[np.ndarray, np.ndarray]:
    """
    Warm start on a new grid: the smooth remainder F − superposition is interpolated onto
    the new nodes and added to the new configuration's superposition.
    """
    old = _problem_of(F)
    live_old = (old.kind != NodeKind.EXCISED)
    rem_U = np.where(live_old, F.U - old.sup_U.reshape(old.shape), 0.0)
    rem_v = np.where(live_old, F.v - old.sup_v.reshape(old.shape), 0.0)
    pts = np.column_stack([problem.R.ravel(), problem.Z.ravel()])
    kwargs = dict(bounds_error=False, fill_value=0.0)
    U = problem.sup_U + RegularGridInterpolator((old.rho, old.z), rem_U, **kwargs)(pts)
    v = problem.sup_v + RegularGridInterpolator((old.rho, old.z), rem_v, **kwargs)(pts)
    b = F.b if len(F.b) == problem.config.N else None
    return problem.apply_boundary(U, v, b)


def _node_colors(problem):
    nz = problem.shape[1]
    nodes = np.concatenate([problem.free_U, problem.free_v])
    return ((nodes // nz) + (nodes % nz)) % 2


def _redblack_direction(H, rhs, colors, sweeps, rtol=1e-10):
    """Two-colour block Gauss-Seidel; blocks couple U and v of the same node only."""
    d = np.zeros_like(rhs)
    groups = []
    for color in (0, 1):
        idx = np.flatnonzero(colors == color)
        if idx.size:
            rows = H[idx]
            groups.append((idx, rows, factorized(rows[:, idx].tocsc())))
    target = np.linalg.norm(rhs) * rtol
    for sweep in range(sweeps):
        for idx, rows, solve_block in groups:
            d[idx] = solve_block(rhs[idx] - rows @ d + rows[:, idx] @ d[idx])
        if np.linalg.norm(H @ d - rhs) <= target:
            break
    return d


def _scaled_solve(H, rhs):
    diag = np.abs(H.diagonal())
    diag[diag == 0] = 1.0
    s = 1.0 / np.sqrt(diag)
    S = sparse.diags(s)
    with np.errstate(all="ignore"):
        y = spsolve((S @ H @ S).tocsc(), s * rhs)
    return s * y


def _newton_direction(problem, U, v, g, opts):
    free = problem.free
    H_full = problem.hessian(U, v, coupled=True)
    H = H_full[free][:, free]
    if opts.linear_solver == "redblack":
        d = _redblack_direction(H, -g, _node_colors(problem), opts.gs_sweeps)
    else:
        d = _scaled_solve(H, -g)
        if not (np.all(np.isfinite(d)) and g @ d < 0):
            Logging.debug("Newton direction rejected, using block-diagonal Hessian")
            H_block = problem.hessian(U, v, coupled=False)[free][:, free]
            d = _scaled_solve(H_block, -g)
    if not (np.all(np.isfinite(d)) and g @ d < 0):
        diag = np.abs(H.diagonal())
        diag[diag == 0] = 1.0
        d = -g / diag
    return d


def _newton(problem: HalfPlaneProblem, U, v, b, opts: SolverOptions) -> MapField:
    nU = problem.free_U.size
    fU, fv = problem.free_U, problem.free_v
    history = []
    prev_res = math.inf
    increases = 0
    res = math.inf
    for it in range(opts.max_iters + 1):
        E = problem.energy(U, v)
        history.append(E)
        res_U, res_v = problem.residual_arrays(U, v)
        res = float(max(np.max(np.abs(res_U), initial=0.0), np.max(np.abs(res_v), initial=0.0)))
        Logging.debug(f"newton {it}: energy {E:.12g} residual {res:.3e}")
        if res < opts.tol:
            return _field_from_flat(problem, U, v, b, converged=True, residual_norm=res, iterations=it,
                                    energy_history=history)
        if it == opts.max_iters:
            break
        increases = increases + 1 if res > prev_res else 0
        if increases >= DIVERGENCE_WINDOW:
            raise SolverDivergence(f"residual grew over {DIVERGENCE_WINDOW} consecutive iterations (now {res:.3e})")
        prev_res = res

        gU, gv = problem.gradient(U, v)
        g = np.concatenate([gU[fU], gv[fv]])
        d = _newton_direction(problem, U, v, g, opts)
        slope = float(g @ d)
        alpha = opts.damping
        for _ in range(MAX_HALVINGS):
            U_try, v_try = U.copy(), v.copy()
            U_try[fU] += alpha * d[:nU]
            v_try[fv] += alpha * d[nU:]
            E_try = problem.energy(U_try, v_try)
            if np.isfinite(E_try) and E_try <= E + opts.armijo * alpha * slope + ENERGY_SLACK * abs(E):
                break
            alpha *= 0.5
        else:
            if res < STALL_FACTOR * opts.tol:
                Logging.warn(f"line search stalled at residual {res:.3e} above tol {opts.tol:.1e}, "
                             "returning unconverged")
                return _field_from_flat(problem, U, v, b, converged=False, residual_norm=res, iterations=it,
                                        energy_history=history)
            raise SolverDivergence(f"line search failed at residual {res:.3e}")
        Logging.debug(f"newton {it}: step {alpha:.3g}")
        U, v = U_try, v_try
    raise IterationLimit(f"no convergence after {opts.max_iters} Newton iterations (residual {res:.3e})")


def solve(problem: HalfPlaneProblem, opts: Optional[SolverOptions] = None, initial: Optional[MapField] = None,
          metrics=None) -> MapField:
    """
    Solves for (U, v) with b-self-consistent excision data: each round solves with fixed b,
    re-fits b from the solution and stops once max|Δb| < b_tol.
    """
    from harmonic import EnergyDefects

    opts = opts or SolverOptions()
    started = time.perf_counter()
    if metrics is not None:
        metrics.solves_started.inc()
    N = problem.config.N
    if initial is not None:
        U, v = transfer(initial, problem)
        b = initial.b.copy() if len(initial.b) == N else np.zeros(N)
    else:
        b = np.zeros(N)
        U, v = problem.initial_state(b)
    iterations = 0
    try:
        for rnd in range(1, opts.b_max_rounds + 1):
            U, v = problem.apply_boundary(U, v, b)
            F = _newton(problem, U, v, b, opts)
            iterations += F.iterations
            if metrics is not None:
                metrics.newton_iterations.observe(F.iterations)
                metrics.b_rounds.inc()
            if N == 0:
                break
            fits = np.array([EnergyDefects.tangent_fit(F, i, opts.fit_ring_factor)[0] for i in range(N)])
            F.b_fit = fits
            db = float(np.max(np.abs(fits - b)))
            Logging.info(f"b round {rnd}: b = {np.array2string(fits, precision=6)} (change {db:.2e})")
            if db < opts.b_tol:
                break
            b = fits
            U, v = F.U.ravel().copy(), F.v.ravel().copy()
        else:
            raise IterationLimit(f"excision parameters did not settle in {opts.b_max_rounds} rounds")
    except Exception:
        if metrics is not None:
            metrics.solves_failed.inc()
        raise
    F.iterations = iterations
    elapsed = time.perf_counter() - started
    if metrics is not None:
        metrics.solve_seconds.observe(elapsed)
        if F.converged:
            metrics.solves_converged.inc()
    if F.converged:
        Logging.info(f"{Logging.TCol.cOkGreen}solve converged{Logging.TCol.cEnd}: {N} punctures, "
                     f"residual {F.residual_norm:.2e}, {iterations} iterations, {elapsed:.1f}s")
    else:
        Logging.warn(f"solve stopped unconverged: {N} punctures, residual {F.residual_norm:.2e} "
                     f"(tol {opts.tol:.1e}), {iterations} iterations")
    return F
