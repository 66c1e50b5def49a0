"""
Spherical part of the linearised harmonic map operator at a tangent map: piecewise-linear
finite elements in θ, the symmetrised bilinear form, the generalised eigenproblem and the
decay exponents read off its eigenvalues.

Unknowns are (φ₁ at every node, φ₂ at interior nodes); φ₂ vanishes at the clipped poles.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from harmonic.Errors import ConfigurationError, SpectralError
from harmonic.KerrLibrary import TangentMap, tangent_weight
from utils import Logging

MIN_ELEMENTS = 16
GAUSS_POINTS = 6


@dataclass
class SpectralProblem:
    tangent: TangentMap
    n_theta: int
    azimuthal_mode: int
    theta: np.ndarray
    weight: np.ndarray
    stiffness: np.ndarray
    mass: np.ndarray
    bilinear: np.ndarray

    @property
    def n_phi1(self):
        return self.n_theta + 1

    def split(self, x):
        """(φ₁, φ₂) on all nodes from a coefficient vector."""
        phi1 = x[:self.n_phi1]
        phi2 = np.zeros(self.n_phi1)
        phi2[1:-1] = x[self.n_phi1:]
        return phi1, phi2


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    theta: np.ndarray
    beta_bar_sup: Optional[float]

    def to_dict(self):
        return {"eigenvalues": self.eigenvalues.tolist(), "beta_bar_sup": self.beta_bar_sup}


def assemble(tm: TangentMap, n_theta: int, m: int = 0) -> SpectralProblem:
    """
    Bilinear form
      ∫[φ₁'ψ₁' + Wφ₂'ψ₂' + 8W v̄'² φ₁ψ₁ + 4W v̄' ψ₁φ₂' − 4W v̄' ψ₂φ₁' + m²/sin²θ (φ₁ψ₁ + Wφ₂ψ₂)] sin θ dθ
    with W = e^{4ū}, on [θ_min, π − θ_min], θ_min = π/(4n). The stiffness matrix is its
    symmetric part; the mass matrix carries weights (1, W).
    """
    if n_theta < MIN_ELEMENTS:
        raise SpectralError(f"need at least {MIN_ELEMENTS} elements, got {n_theta}")
    if m < 0:
        raise SpectralError(f"azimuthal mode must be nonnegative, got {m}")
    n = int(n_theta)
    theta_min = math.pi / (4 * n)
    theta = np.linspace(theta_min, math.pi - theta_min, n + 1)
    a, b = tm.a, tm.b
    n1 = n + 1
    size = n1 + n - 1
    A = np.zeros((size, size))
    M = np.zeros((size, size))

    def p2(node):
        return n1 + node - 1 if 0 < node < n else -1

    xq, wq = leggauss(GAUSS_POINTS)
    for e in range(n):
        t0, t1 = theta[e], theta[e + 1]
        h = t1 - t0
        tq = t0 + 0.5 * h * (1.0 + xq)
        jw = 0.5 * h * wq
        s, c = np.sin(tq), np.cos(tq)
        D = 1.0 + c * c + 2.0 * b * c
        W = tangent_weight(tm, tq)
        Wdv = -1.0 / (2.0 * a * s)
        Wdv2 = s * s * (1.0 - b * b) / (D * D)
        basis = [1.0 - 0.5 * (1.0 + xq), 0.5 * (1.0 + xq)]
        dbasis = [-1.0 / h, 1.0 / h]
        nodes = (e, e + 1)
        for ia, na in enumerate(nodes):
            for ib, nb in enumerate(nodes):
                Na, Nb = basis[ia], basis[ib]
                dNa, dNb = dbasis[ia], dbasis[ib]
                A[na, nb] += np.sum(jw * s * (dNa * dNb + (8.0 * Wdv2 + m * m / (s * s)) * Na * Nb))
                M[na, nb] += np.sum(jw * s * Na * Nb)
                ra, rb = p2(na), p2(nb)
                if ra >= 0 and rb >= 0:
                    A[ra, rb] += np.sum(jw * s * W * (dNa * dNb + m * m / (s * s) * Na * Nb))
                    M[ra, rb] += np.sum(jw * s * W * Na * Nb)
                if rb >= 0:
                    A[na, rb] += np.sum(jw * s * 4.0 * Wdv * Na * dNb)
                if ra >= 0:
                    A[ra, nb] -= np.sum(jw * s * 4.0 * Wdv * Na * dNb)
    K = 0.5 * (A + A.T)
    weight = tangent_weight(tm, theta)
    return SpectralProblem(tangent=tm, n_theta=n, azimuthal_mode=m, theta=theta, weight=weight, stiffness=K,
                           mass=M, bilinear=A)


def eigen(problem: SpectralProblem, k: int = 6) -> SpectralResult:
    """Smallest k eigenpairs of K x = μ M x, mass-orthonormal."""
    size = problem.stiffness.shape[0]
    if not 1 <= k <= size:
        raise SpectralError(f"cannot compute {k} eigenpairs of a {size}-dimensional problem")
    d = np.diag(problem.mass)
    if np.any(d <= 0):
        raise SpectralError("mass matrix has a nonpositive diagonal entry")
    scale = 1.0 / np.sqrt(d)
    Ms = problem.mass * scale[:, None] * scale[None, :]
    Ks = problem.stiffness * scale[:, None] * scale[None, :]
    try:
        linalg.cholesky(Ms, lower=True)
    except linalg.LinAlgError as e:
        raise SpectralError(f"mass matrix is not positive definite: {e}") from e
    mu, y = linalg.eigh(Ks, Ms, subset_by_index=[0, k - 1])
    x = y * scale[:, None]
    phi1 = np.empty((k, problem.n_phi1))
    phi2 = np.empty((k, problem.n_phi1))
    for i in range(k):
        phi1[i], phi2[i] = problem.split(x[:, i])
    beta = None
    if k >= 2 and mu[1] >= 0:
        beta = decay_exponents(float(mu[1]))[2]
    Logging.debug(f"spectrum b={problem.tangent.b} m={problem.azimuthal_mode} n={problem.n_theta}: "
                  f"{np.array2string(mu, precision=6)}")
    return SpectralResult(eigenvalues=mu, vectors=x, phi1=phi1, phi2=phi2, theta=problem.theta, beta_bar_sup=beta)


def decay_exponents(mu: float):
    """(λ⁺, λ⁻, β̄_sup): λ± = ½(1 ± √(1 + 4μ)) and β̄_sup the positive root of β² + β = μ."""
    if not mu >= 0:
        raise ConfigurationError(f"decay exponents need μ ≥ 0, got {mu}")
    root = math.sqrt(1.0 + 4.0 * mu)
    return 0.5 * (1.0 + root), 0.5 * (1.0 - root), 0.5 * (root - 1.0)


def rayleigh(problem: SpectralProblem, x):
    x = np.asarray(x, dtype=float)
    return float(x @ problem.stiffness @ x) / float(x @ problem.mass @ x)


def quadratic_form(problem: SpectralProblem, x):
    x = np.asarray(x, dtype=float)
    return float(x @ problem.stiffness @ x)


def antisymmetric_norm(problem: SpectralProblem):
    """‖A − Aᵀ‖_F / ‖A + Aᵀ‖_F of the assembled (unsymmetrised) form."""
    A = problem.bilinear
    return float(np.linalg.norm(A - A.T) / np.linalg.norm(A + A.T))


def antisymmetric_rayleigh(problem: SpectralProblem, pairs: int = 32, seed: int = 0):
    """
    Largest |B(φ, ψ) − B(ψ, φ)| / 2 over random pairs, relative to the mass norms of φ and ψ.
    The quadratic form itself never sees the antisymmetric part.
    """
    rng = np.random.default_rng(seed)
    A = problem.bilinear
    size = A.shape[0]
    worst = 0.0
    for _ in range(pairs):
        phi, psi = rng.standard_normal(size), rng.standard_normal(size)
        anti = 0.5 * abs(psi @ A @ phi - phi @ A @ psi)
        norm = math.sqrt(float(phi @ problem.mass @ phi) * float(psi @ problem.mass @ psi))
        worst = max(worst, anti / norm)
    return worst


def spectrum_row(b: float, m: int, result: SpectralResult):
    return [m, b] + result.eigenvalues.tolist() + [result.beta_bar_sup]


def spectrum_header(k: int):
    return ["m", "b"] + [f"mu_{i + 1}" for i in range(k)] + ["beta_bar_sup"]


def solve_spectrum(a: float, b: float, n_theta: int, m: int = 0, k: int = 6, metrics=None) -> SpectralResult:
    problem = assemble(TangentMap(a=a, b=b), n_theta, m)
    result = eigen(problem, k)
    if metrics is not None:
        metrics.spectral_solves.inc()
    return result
