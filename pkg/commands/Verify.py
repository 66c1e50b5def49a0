"""
Property suites over every numerical module. Fast suites run by default; the slow ones
repeat the acceptance runs at desk-scale grids and take minutes.
"""
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import click
import numpy as np

from commands.BaseCommand import BaseCommand
from harmonic import (EnergyDefects, HalfplaneSolver, HyperbolicGeometry, KerrLibrary, ModelMaps, PunctureFlow,
                      SpectralLinearized)
from harmonic.Errors import KerrflowError
from harmonic.HyperbolicGeometry import HPoint
from harmonic.KerrLibrary import KerrParams, TangentMap
from utils import Lang, Logging, Utils
from utils.Logging import TCol

COMPARISON_SAMPLES = 10000


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: Any = None
    expected: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": bool(self.passed), "value": self.value, "expected": self.expected}


@dataclass
class SuiteResult:
    suite: str
    checks: List[CheckResult] = field(default_factory=list)
    values: Dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0
    error: Optional[dict] = None

    @property
    def passed(self):
        return self.error is None and all(c.passed for c in self.checks)

    def check(self, name, passed, value=None, expected=None):
        self.checks.append(CheckResult(name, bool(passed), value, expected))

    def to_dict(self) -> Dict[str, Any]:
        return {"suite": self.suite, "passed": self.passed, "seconds": round(self.seconds, 3),
                "checks": [c.to_dict() for c in self.checks], "values": self.values, "error": self.error}


class VerifyContext:
    def __init__(self, seed, solver_opts, metrics=None):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.solver_opts = solver_opts
        self.metrics = metrics
        self.cache = dict()

    def solve(self, config, grid):
        problem = HalfplaneSolver.discretize(config, grid)
        return HalfplaneSolver.solve(problem, self.solver_opts, metrics=self.metrics)

    def single_kerr(self):
        """J=1 at the origin on the small verification grid, solved once per run."""
        if "single" not in self.cache:
            config = HalfplaneSolver.PunctureConfig.from_lists([0.0], [1.0])
            self.cache["single"] = self.solve(config, small_grid(config))
        return self.cache["single"]


def small_grid(config, n_z=None):
    n_z = n_z or (128 if config.N <= 1 else 200)
    return HalfplaneSolver.GridSpec.centered_on(config, 10.0, rho_max=10.0, n_rho=64, n_z=n_z, excision_radius=0.05)


def closed_form_difference(F, k: KerrParams, factor=4.0):
    """sup |(U, v) − Kerr| over the nodes farther than factor·ε from the puncture."""
    R, Z = F.rho_grid, F.z_grid
    far = np.hypot(R, Z - k.center_z) > factor * F.grid.excision_radius
    Uk, vk = KerrLibrary.kerr_eval(k, R[far], Z[far])
    return float(max(np.max(np.abs(F.U[far] - Uk)), np.max(np.abs(F.v[far] - vk))))


# fast suites

def suite_geometry(ctx: VerifyContext, out: SuiteResult):
    rng = ctx.rng
    pts = rng.uniform([-3.0, -5.0], [3.0, 5.0], size=(3000, 2))
    shifts = rng.uniform(-2.0, 2.0, size=1000)
    worst_iso, worst_tri = 0.0, 0.0
    for k in range(1000):
        p, q, r = (HPoint(*pts[3 * k + j]) for j in range(3))
        d_pq = HyperbolicGeometry.distance(p, q)
        moved = HyperbolicGeometry.distance(p.moved(shifts[k]), q.moved(shifts[k]))
        worst_iso = max(worst_iso, abs(moved - d_pq) / max(1.0, d_pq))
        excess = HyperbolicGeometry.distance(p, r) - d_pq - HyperbolicGeometry.distance(q, r)
        worst_tri = max(worst_tri, excess)
    out.check("isometry_invariance", worst_iso <= 1e-9, worst_iso, "≤ 1e-9")
    out.check("triangle_inequality", worst_tri <= 1e-9, worst_tri, "≤ 1e-9")
    c = 0.7
    d = HyperbolicGeometry.distance(HPoint(0.0, 0.0), HPoint(0.0, c))
    out.check("v_shift_distance", abs(d - 0.5 * math.acosh(1 + 2 * c * c)) <= 1e-12, d, "½arccosh(1+2c²)")

    for trial in range(3):
        p1 = float(rng.uniform(-2.0, 2.0))
        p2 = p1 + float(rng.uniform(0.05, 2.0))
        p0 = 0.5 * (p1 + p2)
        eta = 0.25 * (p2 - p1)
        delta = 4.0 * (0.5 * (p2 - p1) + eta)
        scale = 10.0 * delta
        sample = np.column_stack([rng.uniform(0.0, scale, COMPARISON_SAMPLES),
                                  rng.uniform(p0 - scale, p0 + scale, COMPARISON_SAMPLES)])
        lam = float(rng.uniform(0.0, 1.0))
        for name, report in ModelMaps.axis_comparison_checks(p1, p2, p0, sample, delta, lam).items():
            out.check(f"{name}[{trial}]", report.passed and report.hypothesis_ok, report.worst, "0 violations")


def suite_kerr(ctx: VerifyContext, out: SuiteResult):
    out.check("f3(0)", abs(KerrLibrary.f3(0.0)) <= 1e-10, KerrLibrary.f3(0.0), "0")
    out.check("f4(0)", abs(KerrLibrary.f4(0.0)) <= 1e-10, KerrLibrary.f4(0.0), "0")
    df3 = KerrLibrary.df3(0.0)
    df4 = KerrLibrary.df4(0.0)
    out.check("df3(0)", abs(df3 - 4 * math.pi * (4 - math.pi)) <= 1e-6, df3, "4π(4−π)")
    out.check("df4(0)", abs(df4 - 4 * math.pi * (math.pi - 3)) <= 1e-6, df4, "4π(π−3)")
    b = np.linspace(-1.0, 1.0, 201)[1:-1]
    fb = KerrLibrary.f(b) * b
    out.check("f_times_b_nonnegative", np.min(fb) >= -1e-12, float(np.min(fb)), "≥ 0 on 199 samples")

    k = KerrParams.from_angular_momentum(1.0)
    rho = np.array([0.8, 1.5, 2.5])
    z = np.array([0.6, -1.2, 2.0])
    errors = []
    for h in (0.04, 0.02, 0.01, 0.005):
        res_U, res_v = KerrLibrary.kerr_residual(k, rho, z, h, order=2)
        errors.append(float(max(np.max(np.abs(res_U)), np.max(np.abs(res_v)))))
    orders = [math.log2(e0 / e1) for e0, e1 in zip(errors[:-1], errors[1:])]
    out.values["kerr_residuals"] = errors
    out.check("kerr_residual_order", all(abs(p - 2.0) <= 0.3 for p in orders), orders, "2.0 ± 0.3")

    theta = np.linspace(0.3, math.pi - 0.3, 25)
    for bb in (-0.6, 0.0, 0.4):
        tm = TangentMap(a=2.0, b=bb)
        lhs1, rhs1, lhs2, rhs2 = KerrLibrary.tangent_identity_check(tm, theta)
        gap = float(max(np.max(np.abs(lhs1 - rhs1)), np.max(np.abs(lhs2 - rhs2))))
        out.check(f"tangent_identities[b={bb}]", gap <= 1e-10, gap, "≤ 1e-10")
        res_u, res_v = KerrLibrary.tangent_harmonic_residual(tm, theta)
        worst = float(max(np.max(np.abs(res_u)), np.max(np.abs(res_v))))
        out.check(f"tangent_harmonic[b={bb}]", worst <= 1e-5, worst, "≤ 1e-5")
    E0 = KerrLibrary.tangent_energy_integral(0.0)
    out.check("tangent_energy(0)", abs(E0 - math.pi) <= 1e-10, E0, "π")


def suite_model_maps(ctx: VerifyContext, out: SuiteResult):
    config = HalfplaneSolver.PunctureConfig.from_lists([-1.0, 0.5, 2.0], [1.0, -0.5, 2.0], potential_shift=0.3)
    sup = ModelMaps.superposition(config)
    edges = np.concatenate([[config.zs[0] - 5.0], config.zs, [config.zs[-1] + 5.0]])
    mids = 0.5 * (edges[:-1] + edges[1:])
    _, v_axis = sup(np.zeros_like(mids), mids)
    gap = float(np.max(np.abs(v_axis - config.potential_constants)))
    out.check("superposition_rod_constants", gap <= 1e-12, gap, "≤ 1e-12")

    kerr = ModelMaps.KerrMap(KerrParams.from_angular_momentum(1.0))
    rho = ctx.rng.uniform(0.5, 3.0, 200)
    z = ctx.rng.uniform(-2.0, 2.0, 200)
    tau = float(np.max(ModelMaps.tension(kerr, rho, z)))
    out.check("kerr_tension", tau <= 1e-4, tau, "O(h²), ≤ 1e-4")

    k1 = KerrParams(a_kerr=1.0, center_z=-0.01, offset=-2.0)
    k2 = KerrParams(a_kerr=1.0, center_z=0.01, offset=2.0)
    collision = ModelMaps.KerrMap(KerrParams.from_angular_momentum(2.0, 0.0))
    blend = ModelMaps.build_two_puncture_blend(k1, k2, collision, delta=1.0)
    r = np.geomspace(0.04, 0.4, 40)
    scaled = r * r * ModelMaps.tension(blend, r, np.zeros_like(r))
    inner = float(np.max(scaled[:len(r) // 3]))
    out.values["blend_r2_tension"] = scaled.tolist()
    out.check("blend_tension_r2_bounded", np.all(np.isfinite(scaled)) and np.max(scaled) <= 3.0 * inner,
              float(np.max(scaled) / inner) if inner > 0 else None, "sup ≤ 3× inner third")

    pair = ModelMaps.superposition(HalfplaneSolver.PunctureConfig.from_lists([-1.0, 1.0], [1.0, 1.0]))
    single = ModelMaps.KerrMap(KerrParams.from_angular_momentum(2.0))
    d = ModelMaps.asymptotic_distance(pair, single, [10.0, 100.0, 1000.0])
    out.check("asymptotic_distance_decays", bool(d[0] > d[1] > d[2]), d.tolist(), "decreasing in R")


def suite_spectral(ctx: VerifyContext, out: SuiteResult):
    results = {}
    for n in (256, 512):
        results[n] = SpectralLinearized.solve_spectrum(2.0, 0.0, n, 0, 4, ctx.metrics)
    mu = results[256].eigenvalues
    out.values["eigenvalues"] = mu.tolist()
    out.check("mu1_near_zero", -1e-3 <= mu[0] <= 1e-2, float(mu[0]), "[−1e−3, 1e−2]")
    out.check("mu2_positive", mu[1] > 0, float(mu[1]), "> 0")
    mu2_fine = results[512].eigenvalues[1]
    drift = abs(mu2_fine - mu[1]) / abs(mu[1])
    out.check("mu2_refinement", drift <= 0.01, float(drift), "≤ 1%")
    beta = results[256].beta_bar_sup
    out.check("decay_identity", abs(beta * beta + beta - mu[1]) <= 1e-12 * max(1.0, mu[1]), beta, "β̄² + β̄ = μ₂")
    lp, lm, _ = SpectralLinearized.decay_exponents(0.0)
    out.check("decay_exponents(0)", (lp, lm) == (1.0, 0.0), [lp, lm], "(1, 0)")
    problem = SpectralLinearized.assemble(TangentMap(a=2.0, b=0.3), 64, 1)
    out.values["antisymmetric_norm"] = SpectralLinearized.antisymmetric_norm(problem)
    out.values["antisymmetric_rayleigh"] = SpectralLinearized.antisymmetric_rayleigh(problem, seed=ctx.seed)
    res = SpectralLinearized.eigen(problem, 2)
    ray = SpectralLinearized.rayleigh(problem, res.vectors[:, 0])
    out.check("rayleigh_of_eigenvector", abs(ray - res.eigenvalues[0]) <= 1e-8 * max(1.0, abs(ray)), ray,
              "equals μ₁")


def suite_solver(ctx: VerifyContext, out: SuiteResult):
    F = ctx.single_kerr()
    out.check("converged", F.converged and F.residual_norm < ctx.solver_opts.tol, F.residual_norm,
              f"< {ctx.solver_opts.tol}")
    b = float(F.b_fit[0])
    out.check("single_puncture_b", abs(b) <= 0.02, b, "[−0.02, 0.02]")
    diff = closed_form_difference(F, KerrParams.from_angular_momentum(1.0))
    # loose on the coarse grid; the equality suite holds the desk-scale bound
    out.check("closed_form_difference", diff < 5.0 * F.grid.excision_radius, diff, "< 5ε")
    out.values["iterations"] = F.iterations

    shifted = F.config.shifted(0.5)
    G = ctx.solve(shifted, F.grid)
    E0 = EnergyDefects.energy(F).E_total
    E1 = EnergyDefects.energy(G).E_total
    out.check("potential_shift_energy", abs(E1 - E0) <= 1e-6 * abs(E0), E1 - E0, "unchanged")
    out.check("potential_shift_b", abs(float(G.b_fit[0]) - b) <= 1e-6, float(G.b_fit[0]) - b, "unchanged")


def suite_energy(ctx: VerifyContext, out: SuiteResult):
    F = ctx.single_kerr()
    report = EnergyDefects.energy(F)
    out.check("energy_positive", math.isfinite(report.E_total) and report.E_total > 0, report.E_total, "> 0")
    eps = F.grid.excision_radius
    expected = 2.0 * math.pi ** 2 * eps
    out.check("excision_energy", abs(report.E_excision[0] - expected) <= 1e-2 * expected, report.E_excision[0],
              "≈ 2π²ε")
    defects = EnergyDefects.defect_report(F)
    out.values.update(mass_bound=report.mass_bound, consistency=defects.consistency, b_from_defects=defects.b)


def suite_flow(ctx: VerifyContext, out: SuiteResult):
    config = HalfplaneSolver.PunctureConfig.from_lists([0.0], [1.0])
    grid = small_grid(config)
    flow_ctx = PunctureFlow.SolverContext(grid, ctx.solver_opts, metrics=ctx.metrics)
    initial = PunctureFlow.initial_state([0.0], [1.0], flow_ctx)
    traj = PunctureFlow.run_flow(initial, flow_ctx, PunctureFlow.FlowOptions(dt=0.5, t_max=1.0), grid, ctx.metrics)
    out.check("terminated_by_t_max", traj.terminated_by == PunctureFlow.T_MAX, traj.terminated_by, "t_max")
    drift = float(abs(traj.final.z[0]))
    out.check("single_puncture_stationary", drift <= 0.05, drift, "≤ 0.05")
    E = np.array([s.E for s in traj.states])
    spread = float((E.max() - E.min()) / abs(E[0]))
    out.check("energy_constant", spread <= 1e-2, spread, "≤ 1%")


# slow suites

def suite_equality(ctx: VerifyContext, out: SuiteResult):
    for J, expected, tol in ((1.0, 1.0, 0.02), (4.0, 2.0, 0.04)):
        config = HalfplaneSolver.PunctureConfig.from_lists([0.0], [J])
        grid = HalfplaneSolver.GridSpec.centered_on(config, 40.0, rho_max=40.0, n_rho=256, n_z=512)
        F = ctx.solve(config, grid)
        report = EnergyDefects.energy(F)
        out.check(f"mass_bound[J={J}]", abs(report.mass_bound - expected) <= tol, report.mass_bound,
                  f"{expected} ± {tol}")
        if J == 1.0:
            diff = closed_form_difference(F, KerrParams.from_angular_momentum(J))
            out.check("closed_form_difference", diff < 5e-3, diff, "< 5e−3")
            out.check("single_puncture_b", abs(float(F.b_fit[0])) <= 0.02, float(F.b_fit[0]), "[−0.02, 0.02]")
            defects = EnergyDefects.defect_report(F)
            out.check("fit_vs_defect", defects.consistency <= 0.05, defects.consistency, "≤ 0.05")


def suite_dissipation(ctx: VerifyContext, out: SuiteResult):
    config = HalfplaneSolver.PunctureConfig.from_lists([-3.0, 3.0], [1.0, 1.0])
    grid = HalfplaneSolver.GridSpec.centered_on(config, 60.0, rho_max=60.0, n_rho=192, n_z=384, excision_radius=0.01)
    flow_ctx = PunctureFlow.SolverContext(grid, ctx.solver_opts, metrics=ctx.metrics)
    opts = PunctureFlow.FlowOptions(dt=0.1, t_max=2.4)
    initial = PunctureFlow.initial_state(config.zs, config.Js, flow_ctx)
    traj = PunctureFlow.run_flow(initial, flow_ctx, opts, grid, ctx.metrics)
    out.check("rk4_steps", len(traj.states) >= 21, len(traj.states) - 1, "≥ 20")
    report = PunctureFlow.dissipation_check(traj, opts.energy_tol)
    out.check("energy_monotone", report.monotone_ok, report.max_energy_increase, "< 1%·E(0)")
    misfit = report.max_rel_misfit
    out.check("dissipation_law", misfit is None or misfit < 0.1, misfit, "< 10% where |b| > 0.05")
    out.check("symmetric_b", all(abs(s.b[0] + s.b[-1]) <= 1e-3 for s in traj.states if s.N == 2), None,
              "b₁ = −b₂")


def suite_collision(ctx: VerifyContext, out: SuiteResult):
    config = HalfplaneSolver.PunctureConfig.from_lists([-0.15, 0.15], [1.0, 1.0])
    grid = small_grid(config)
    flow_ctx = PunctureFlow.SolverContext(grid, ctx.solver_opts, metrics=ctx.metrics)
    opts = PunctureFlow.FlowOptions(t_max=0.2, collision_gap=0.5, energy_tol=0.02)
    initial = PunctureFlow.initial_state(config.zs, config.Js, flow_ctx)
    traj = PunctureFlow.run_flow(initial, flow_ctx, opts, grid, ctx.metrics)
    collisions = [e for e in traj.events if e.kind == PunctureFlow.COLLISION]
    out.check("collision_detected", len(collisions) >= 1, len(collisions), "≥ 1")
    if collisions:
        event = collisions[0]
        total_after = float(np.sum(event.config_after["J"]))
        out.check("angular_momentum_conserved", total_after == float(np.sum(config.Js)), total_after, "ΣJ exact")
        out.check("merge_energy", event.monotone, [event.energy_before, event.energy_after], "≤ E_before + 2%")


def suite_invariance(ctx: VerifyContext, out: SuiteResult):
    config = HalfplaneSolver.PunctureConfig.from_lists([-1.0, 1.0], [1.0, 2.0])
    F = ctx.solve(config, small_grid(config))
    mirrored = config.mirrored()
    G = ctx.solve(mirrored, small_grid(mirrored))
    gap = float(np.max(np.abs(G.b_fit[::-1] + F.b_fit)))
    out.check("mirror_antisymmetry", gap <= 1e-3, gap, "b → −b reversed")
    moved = config.moved(config.zs + 0.7)
    H = ctx.solve(moved, small_grid(moved))
    gap = float(np.max(np.abs(H.b_fit - F.b_fit)))
    out.check("translation_equivariance", gap <= 1e-3, gap, "b unchanged")


SUITES = {
    "geometry": (suite_geometry, False),
    "kerr": (suite_kerr, False),
    "model_maps": (suite_model_maps, False),
    "spectral": (suite_spectral, False),
    "solver": (suite_solver, False),
    "energy": (suite_energy, False),
    "flow": (suite_flow, False),
    "equality": (suite_equality, True),
    "dissipation": (suite_dissipation, True),
    "collision": (suite_collision, True),
    "invariance": (suite_invariance, True),
}


def select_suites(names, slow):
    if names:
        return list(names)
    return [name for name, (_, is_slow) in SUITES.items() if slow or not is_slow]


def run_suite(name, ctx: VerifyContext) -> SuiteResult:
    fn, _ = SUITES[name]
    out = SuiteResult(name)
    started = time.perf_counter()
    try:
        fn(ctx, out)
    except KerrflowError as e:
        out.error = Utils.log_exception(f"verify suite {name} raised", e, command="verify")
    out.seconds = time.perf_counter() - started
    return out


class Verify(BaseCommand):
    name = "verify"

    def click_command(self):
        @click.command(name=self.name, help="Run the property suites and write verify.json.")
        @click.option("--suite", "suites", type=click.Choice(list(SUITES)), multiple=True,
                      help="Suite to run, repeatable; defaults to every fast suite.")
        @click.option("--slow", is_flag=True, default=False, help="Include the acceptance-scale suites.")
        def verify(suites, slow):
            return self.invoke(suites=list(suites), slow=slow)

        return verify

    def run(self, cfg, out_dir, suites=None, slow=False):
        slow = slow or cfg.verify.slow
        unknown = [s for s in cfg.verify.suites if s not in SUITES]
        if unknown:
            Logging.warn(Lang.get_string("verify/unknown_suites", suites=", ".join(unknown)))
        names = select_suites(suites or [s for s in cfg.verify.suites if s in SUITES], slow)
        seed = self.app.seed if self.app.seed is not None else cfg.seed
        ctx = VerifyContext(seed, cfg.solver.options(), self.metrics)
        results = []
        for name in names:
            Logging.info(f"suite {TCol.cOkCyan}{name}{TCol.cEnd}")
            result = run_suite(name, ctx)
            verdict = "pass" if result.passed else "fail"
            self.metrics.verify_suites.labels(suite=name, verdict=verdict).inc()
            if result.passed:
                Logging.info(Lang.get_string("verify/suite_passed", suite=name, seconds=f"{result.seconds:.2f}"))
            else:
                failed = [c.name for c in result.checks if not c.passed]
                if result.error is not None:
                    failed.append(result.error["type"])
                Logging.warn(Lang.get_string("verify/suite_failed", suite=name, failed=", ".join(failed)))
            results.append(result)
        passed = all(r.passed for r in results)
        report = {"seed": seed, "slow": slow, "passed": passed, "suites": [r.to_dict() for r in results]}
        Utils.save_to_disk(self.output(out_dir, "verify"), report)
        Logging.info(Lang.get_string("verify/done", passed=sum(r.passed for r in results), total=len(results)))
        return 0 if passed else 1


def setup(app):
    app.add_command(Verify(app))
