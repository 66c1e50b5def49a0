"""
The puncture flow dz_i/dt = −b_i(z): classical RK4 with a fresh solve per stage, event
detection (collision, scattering, stagnation), restarts across events and the energy
dissipation law dE/dt = −Σ f(b_i) b_i.
"""
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Protocol

import numpy as np

from harmonic import EnergyDefects, HalfplaneSolver, KerrLibrary
from harmonic.Errors import ConfigurationError, FlowError, UnconvergedField
from utils import Logging
from utils.Logging import TCol

COLLISION = "collision"
SCATTERING = "scattering"
STAGNATION = "stagnation"
T_MAX = "t_max"
MAX_STEPS = "max_steps"
MIN_STEP_FRACTION = 1e-6
ACTIVE_B = 0.05


@dataclass
class FlowSample:
    b: np.ndarray
    E: float


class FlowContext(Protocol):
    def sample(self, z: np.ndarray, J: np.ndarray) -> FlowSample:
        ...


class SolverContext:
    """Solve + extraction at each requested configuration, warm-started from the previous field."""

    def __init__(self, grid: HalfplaneSolver.GridSpec, solver_opts: Optional[HalfplaneSolver.SolverOptions] = None,
                 potential_shift: float = 0.0, metrics=None):
        self.grid = grid
        self.solver_opts = solver_opts or HalfplaneSolver.SolverOptions()
        self.potential_shift = potential_shift
        self.metrics = metrics
        self.last_field = None
        self.samples = 0

    def fork(self):
        return SolverContext(self.grid, self.solver_opts, self.potential_shift, self.metrics)

    def sample(self, z, J) -> FlowSample:
        config = HalfplaneSolver.PunctureConfig.from_lists(z, J, self.potential_shift)
        grid = self.grid.recentered(config.center)
        problem = HalfplaneSolver.discretize(config, grid)
        F = HalfplaneSolver.solve(problem, self.solver_opts, initial=self.last_field, metrics=self.metrics)
        if not F.converged or not F.residual_norm < self.solver_opts.tol:
            raise UnconvergedField(f"flow sample at z={np.array2string(np.asarray(z), precision=6)} stopped at "
                                   f"residual {F.residual_norm:.3e} (tol {self.solver_opts.tol:.1e})")
        self.last_field = F
        self.samples += 1
        b = F.b_fit if F.b_fit is not None else np.zeros(config.N)
        E = EnergyDefects.energy(F).E_total
        if self.metrics is not None:
            self.metrics.energy_last.set(E)
        return FlowSample(np.asarray(b, dtype=float), E)


@dataclass
class FlowState:
    t: float
    z: np.ndarray
    J: np.ndarray
    b: np.ndarray
    E: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.J = np.asarray(self.J, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if np.any(self.J == 0):
            raise ConfigurationError("flow states need nonzero angular momenta")
        if np.any(np.diff(self.z) <= 0):
            raise ConfigurationError(f"puncture positions must be strictly increasing, got {self.z}")

    @property
    def N(self):
        return len(self.z)

    def config(self):
        return {"z": self.z.tolist(), "J": self.J.tolist()}


@dataclass
class FlowEvent:
    kind: str
    t: float
    indices: List[List[int]]
    config_before: dict
    config_after: Optional[object] = None
    energy_before: Optional[float] = None
    energy_after: Optional[float] = None
    monotone: Optional[bool] = None

    def to_dict(self):
        return asdict(self)


@dataclass
class FlowOptions:
    dt: Optional[float] = None
    t_max: float = 1.0
    collision_gap: Optional[float] = None
    scatter_gap: Optional[float] = None
    stagnation_tol: float = 0.01
    energy_tol: float = 0.01
    max_steps: int = 10000

    def gaps(self, grid: Optional[HalfplaneSolver.GridSpec] = None):
        eps = grid.excision_radius if grid is not None else HalfplaneSolver.GridSpec().excision_radius
        rho_max = grid.rho_max if grid is not None else HalfplaneSolver.GridSpec().rho_max
        collision = self.collision_gap if self.collision_gap is not None else 4.0 * eps
        scatter = self.scatter_gap if self.scatter_gap is not None else 0.5 * rho_max
        return collision, scatter


@dataclass
class FlowTrajectory:
    states: List[FlowState] = field(default_factory=list)
    events: List[FlowEvent] = field(default_factory=list)
    terminated_by: Optional[str] = None
    children: List["FlowTrajectory"] = field(default_factory=list)

    @property
    def final(self):
        return self.states[-1]

    def total_final_energy(self):
        if self.children:
            return sum(child.total_final_energy() for child in self.children)
        return self.final.E


def flow_rhs(z, J, ctx: FlowContext) -> np.ndarray:
    """b(z) from a fresh solve; the flow velocity is −b."""
    return ctx.sample(np.asarray(z, dtype=float), np.asarray(J, dtype=float)).b


def _clusters(z, split):
    """Runs of consecutive indices whose neighbouring gaps satisfy `split(gap)` == False."""
    groups = [[0]]
    for k, gap in enumerate(np.diff(z)):
        if split(gap):
            groups.append([k + 1])
        else:
            groups[-1].append(k + 1)
    return groups


def detect_event(state: FlowState, stagnation_tol, collision_gap, scatter_gap) -> Optional[FlowEvent]:
    if state.N < 2:
        return None
    if np.max(np.abs(state.b)) < stagnation_tol:
        return FlowEvent(STAGNATION, state.t, [list(range(state.N))], state.config())
    gaps = np.diff(state.z)
    if np.min(gaps) < collision_gap:
        groups = _clusters(state.z, lambda gap: gap >= collision_gap)
        return FlowEvent(COLLISION, state.t, groups, state.config())
    if np.max(gaps) > scatter_gap:
        groups = _clusters(state.z, lambda gap: gap > scatter_gap)
        return FlowEvent(SCATTERING, state.t, groups, state.config())
    return None


def auto_dt(state: FlowState, opts: FlowOptions):
    cap = opts.t_max / (4.0 if state.N >= 2 else 10.0)
    bmax = float(np.max(np.abs(state.b))) if state.N else 0.0
    if state.N < 2 or bmax == 0.0:
        return cap
    return min(cap, 0.05 * float(np.min(np.diff(state.z))) / bmax)


class _OrderLost(Exception):
    pass


def _rk4_step(state: FlowState, h, ctx: FlowContext, min_gap):
    def stage(z):
        if np.any(np.diff(z) <= min_gap):
            raise _OrderLost()
        return -ctx.sample(z, state.J).b

    k1 = -state.b
    k2 = stage(state.z + 0.5 * h * k1)
    k3 = stage(state.z + 0.5 * h * k2)
    k4 = stage(state.z + h * k3)
    z_new = state.z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if np.any(np.diff(z_new) <= min_gap):
        raise _OrderLost()
    s = ctx.sample(z_new, state.J)
    return FlowState(state.t + h, z_new, state.J, s.b, s.E)


def integrate(initial: FlowState, ctx: FlowContext, opts: FlowOptions, grid=None, metrics=None,
              trajectory: Optional[FlowTrajectory] = None) -> FlowTrajectory:
    """
    RK4 on dz/dt = −b(z) from `initial` until t_max or the first event, appending to
    `trajectory` when given. The event, if any, is recorded but not handled.
    """
    collision_gap, scatter_gap = opts.gaps(grid)
    traj = trajectory or FlowTrajectory()
    if not traj.states or traj.states[-1] is not initial:
        traj.states.append(initial)
    state = initial
    steps = 0
    while True:
        event = detect_event(state, opts.stagnation_tol, collision_gap, scatter_gap)
        if event is not None:
            traj.events.append(event)
            traj.terminated_by = event.kind
            Logging.info(f"{TCol.cWarning}{event.kind}{TCol.cEnd} at t={state.t:.6g}: groups {event.indices}")
            if metrics is not None:
                metrics.flow_events.labels(kind=event.kind).inc()
            return traj
        if state.t >= opts.t_max * (1.0 - 1e-12):
            traj.terminated_by = T_MAX
            return traj
        if steps >= opts.max_steps:
            traj.terminated_by = MAX_STEPS
            return traj
        h = min(opts.dt if opts.dt is not None else auto_dt(state, opts), opts.t_max - state.t)
        h_min = MIN_STEP_FRACTION * h
        while True:
            try:
                new_state = _rk4_step(state, h, ctx, 0.5 * collision_gap)
                break
            except _OrderLost:
                h *= 0.5
                Logging.debug(f"step crossed the collision threshold, retrying with dt={h:.3g}")
                if h < h_min:
                    # the closest pair meets within the step
                    closest = float(np.min(np.diff(state.z)))
                    groups = _clusters(state.z, lambda gap: gap > closest)
                    event = FlowEvent(COLLISION, state.t, groups, state.config())
                    traj.events.append(event)
                    traj.terminated_by = COLLISION
                    return traj
        state = new_state
        traj.states.append(state)
        steps += 1
        if metrics is not None:
            metrics.flow_steps.inc()
        Logging.info(f"flow t={state.t:.6g} z={np.array2string(state.z, precision=6)} "
                     f"b={np.array2string(state.b, precision=4)} E={state.E:.8g}")


def handle_event(event: FlowEvent, state: FlowState, ctx: FlowContext, energy_tol: float = 0.01) -> List[FlowState]:
    """
    Post-event states: one merged state after a collision (clusters merged at their
    |J|-weighted mean with summed J), one recentred state per cluster after scattering.
    Fills in the event's after-configuration, energies and monotonicity flag.
    """
    if event.kind == COLLISION:
        z_new, J_new = [], []
        for group in event.indices:
            Js = state.J[group]
            total = float(np.sum(Js))
            if total == 0.0:
                raise FlowError(f"colliding punctures {group} have zero total angular momentum")
            w = np.abs(Js)
            z_new.append(float(np.sum(w * state.z[group]) / np.sum(w)))
            J_new.append(total)
        s = ctx.sample(np.array(z_new), np.array(J_new))
        after = [FlowState(state.t, z_new, J_new, s.b, s.E)]
        event.config_after = after[0].config()
    elif event.kind == SCATTERING:
        after = []
        for group in event.indices:
            z, J = state.z[group], state.J[group]
            w = np.abs(J)
            z = z - float(np.sum(w * z) / np.sum(w))
            sub = ctx.fork() if hasattr(ctx, "fork") else ctx
            s = sub.sample(z, J)
            after.append(FlowState(state.t, z, J, s.b, s.E))
        event.config_after = [s.config() for s in after]
    else:
        raise FlowError(f"event kind {event.kind!r} has no continuation")
    event.energy_before = state.E
    event.energy_after = float(sum(s.E for s in after))
    event.monotone = bool(event.energy_after <= state.E + energy_tol * abs(state.E))
    if not event.monotone:
        Logging.warn(f"energy rose across {event.kind}: {state.E:.8g} -> {event.energy_after:.8g}")
    return after


def run_flow(initial: FlowState, ctx: FlowContext, opts: FlowOptions, grid=None, metrics=None) -> FlowTrajectory:
    """Integrates to t_max, continuing the merged configuration after collisions and every cluster after a split."""
    traj = integrate(initial, ctx, opts, grid, metrics)
    while traj.terminated_by == COLLISION:
        event = traj.events[-1]
        merged = handle_event(event, traj.final, ctx, opts.energy_tol)[0]
        traj.states.append(merged)
        traj = integrate(merged, ctx, opts, grid, metrics, traj)
    if traj.terminated_by == SCATTERING:
        event = traj.events[-1]
        for k, cluster in enumerate(handle_event(event, traj.final, ctx, opts.energy_tol)):
            Logging.info(f"flowing cluster {k} ({cluster.N} punctures)")
            sub = ctx.fork() if hasattr(ctx, "fork") else ctx
            traj.children.append(run_flow(cluster, sub, opts, grid, metrics))
    return traj


def initial_state(z, J, ctx: FlowContext, t0: float = 0.0) -> FlowState:
    s = ctx.sample(np.asarray(z, dtype=float), np.asarray(J, dtype=float))
    return FlowState(t0, z, J, s.b, s.E)


def _segments(states: List[FlowState]):
    seg = [states[0]]
    for s in states[1:]:
        same = s.N == seg[-1].N and np.array_equal(s.J, seg[-1].J) and s.t > seg[-1].t
        if same:
            seg.append(s)
        else:
            yield seg
            seg = [s]
    yield seg


@dataclass
class DissipationReport:
    samples: int
    max_abs_difference: float
    max_rel_misfit: Optional[float]
    sign_law_ok: bool
    monotone_ok: bool
    max_energy_increase: float
    rows: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def dissipation_check(traj: FlowTrajectory, energy_tol: float = 0.01) -> DissipationReport:
    """Centred dE/dt against −Σ f(b_i)b_i at interior steps of every event-free segment."""
    if len(traj.states) < 3:
        raise FlowError(f"dissipation check needs at least 3 states, got {len(traj.states)}")
    rows = []
    for seg in _segments(traj.states):
        for prev, cur, nxt in zip(seg[:-2], seg[1:-1], seg[2:]):
            dEdt = (nxt.E - prev.E) / (nxt.t - prev.t)
            pred = KerrLibrary.dissipation_rate(cur.b)
            active = bool(cur.N and np.max(np.abs(cur.b)) > ACTIVE_B)
            rows.append({"t": cur.t, "dEdt": dEdt, "predicted": pred, "active": active})
    if not rows:
        raise FlowError("no segment has three consecutive states")
    diffs = [abs(r["dEdt"] - r["predicted"]) for r in rows]
    rel = [abs(r["dEdt"] - r["predicted"]) / abs(r["predicted"]) for r in rows
           if r["active"] and r["predicted"] != 0.0]
    sign_ok = all(KerrLibrary.dissipation_rate(s.b) <= 1e-12 for s in traj.states)
    mono = monotonicity(traj, energy_tol)
    return DissipationReport(samples=len(rows), max_abs_difference=float(max(diffs)),
                             max_rel_misfit=float(max(rel)) if rel else None, sign_law_ok=bool(sign_ok),
                             monotone_ok=mono["ok"], max_energy_increase=mono["max_increase"], rows=rows)


def monotonicity(traj: FlowTrajectory, energy_tol: float = 0.01):
    """Largest energy increase between recorded states of each segment, against energy_tol·|E(0)|."""
    E0 = abs(traj.states[0].E) if traj.states else 0.0
    worst = 0.0
    for seg in _segments(traj.states):
        for a, b in zip(seg[:-1], seg[1:]):
            worst = max(worst, b.E - a.E)
    events_ok = all(e.monotone is not False for e in traj.events)
    return {"max_increase": float(worst), "ok": bool(worst <= energy_tol * E0 and events_ok), "events_ok": events_ok}


def trajectory_table(traj: FlowTrajectory):
    """Header `t,z_1..z_M,b_1..b_M,E` and rows padded with None to the largest puncture count M."""
    m = max((s.N for s in traj.states), default=0)
    header = ["t"] + [f"z_{i + 1}" for i in range(m)] + [f"b_{i + 1}" for i in range(m)] + ["E"]
    rows = []
    for s in traj.states:
        pad = [None] * (m - s.N)
        rows.append([s.t] + s.z.tolist() + pad + s.b.tolist() + pad + [s.E])
    return header, rows


def flow_summary(traj: FlowTrajectory):
    out = {"terminated_by": traj.terminated_by, "steps": len(traj.states), "t_final": traj.final.t,
           "z_final": traj.final.z.tolist(), "J_final": traj.final.J.tolist(), "E_initial": traj.states[0].E,
           "E_final": traj.total_final_energy(), "events": [e.kind for e in traj.events]}
    if traj.children:
        out["children"] = [flow_summary(c) for c in traj.children]
    return out
