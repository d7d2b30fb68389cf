"""Time marching of the coupled system and the Picard iteration over [0, T].

A time step runs moments -> kinetic step -> fluid step, every piece using
coefficients frozen at the start of the step.  The Picard iteration reuses
the same step functions, but reads the frozen coefficients from the previous
iterate's stored trajectory instead of from the unknown itself.
"""
from __future__ import annotations

import math
import os
import shutil
import tempfile
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .diagnostics import (DiagnosticsRow, Totals, compute_row, positivity_monitor,
                          sobolev_norm_periodic, state_totals, weighted_lp_norm)
from .domain import PhaseGrid, check_shapes, grid_from_config
from .errors import SimulationAbort, SolverError
from .fluid import FluidStepInputs, fluid_step, fluid_step_conservative, from_symmetrized
from .maxwellian import discrete_maxwellian, local_maxwellian
from .moments import MacroFields, compute_moments, coupling_force_density
from .stencils import periodic_derivative
from .transport import kinetic_step


@dataclass(frozen=True)
class SystemState:
    """Particle density f, fluid (rho, h, u) and time; ``macro`` caches the moments of f."""

    f: np.ndarray
    rho: np.ndarray
    h: np.ndarray
    u: np.ndarray
    gamma: float
    t: float = 0.0
    macro: MacroFields | None = None

    @classmethod
    def build(cls, f, rho, u, gamma, t=0.0, grid: PhaseGrid | None = None, cfg=None):
        rho = np.asarray(rho, dtype=float)
        h = rho ** (0.5 * (gamma - 1.0)) - 1.0
        macro = None
        if grid is not None:
            check_shapes(grid, f=f, rho=rho, u=u)
            kw = {} if cfg is None else {"T_ref": cfg.T_ref, "floor": cfg.moment_floor}
            macro = compute_moments(f, grid, **kw)
        return cls(np.asarray(f, dtype=float), rho, h, np.asarray(u, dtype=float), gamma, t, macro)

    @classmethod
    def from_h(cls, f, h, u, gamma, t=0.0, grid=None, cfg=None):
        rho = from_symmetrized(h, gamma)
        st = cls.build(f, rho, u, gamma, t, grid, cfg)
        return cls(st.f, st.rho, np.asarray(h, dtype=float), st.u, gamma, t, st.macro)


# -- initial data ---------------------------------------------------------------

def _smooth_field(grid, rng, modes, amplitude):
    """Sum of a few random low Fourier modes, scaled to max |.| = amplitude."""
    out = np.zeros(grid.nx)
    X = grid.x_mesh
    for _ in range(modes):
        kvec = rng.integers(-2, 3, size=grid.dim)
        if not kvec.any():
            kvec[0] = 1
        phase = sum(2 * math.pi * kvec[i] * X[i] / grid.lengths[i] for i in range(grid.dim))
        out += rng.normal() * np.cos(phase + rng.uniform(0, 2 * math.pi))
    peak = np.max(np.abs(out))
    return out * (amplitude / peak) if peak > 0 else out


def initial_state(cfg, grid: PhaseGrid | None = None) -> SystemState:
    """Initial data of kind cfg.init.

    equilibrium: uniform Maxwellian particles and uniform fluid.
    perturbed / random: smooth random Fourier perturbations of relative size
    init_amplitude (deterministic in cfg.seed) on rho, u, rho_f and u_f;
    ``random`` also perturbs T_f.  fluid_only: f = 0.
    """
    grid = grid or grid_from_config(cfg)
    d = grid.dim
    rng = np.random.default_rng(cfg.seed)
    ones = np.ones(grid.nx)
    rho = cfg.init_rho * ones
    u = np.zeros((d,) + grid.nx)
    u[0] = cfg.init_u
    rho_f = cfg.init_rho_f * ones
    u_f = np.zeros((d,) + grid.nx)
    u_f[0] = cfg.init_u_f
    T_f = cfg.init_T_f * ones
    A = cfg.init_amplitude
    if cfg.init in ("perturbed", "random") and A > 0:
        rho = rho * (1.0 + _smooth_field(grid, rng, cfg.init_modes, A))
        u = u + np.stack([_smooth_field(grid, rng, cfg.init_modes, A) for _ in range(d)])
        rho_f = rho_f * (1.0 + _smooth_field(grid, rng, cfg.init_modes, A))
        u_f = u_f + np.stack([_smooth_field(grid, rng, cfg.init_modes, A) for _ in range(d)])
        if cfg.init == "random":
            T_f = T_f * (1.0 + _smooth_field(grid, rng, cfg.init_modes, min(A, 0.5)))
    if cfg.init == "fluid_only" or cfg.init_rho_f == 0:
        f = np.zeros(grid.shape)
    else:
        f = discrete_maxwellian(rho_f, u_f, T_f, grid)
    return SystemState.build(f, rho, u, cfg.gamma, 0.0, grid, cfg)


# -- one coupled step -----------------------------------------------------------

def _global_fixup(f, grid, mass, momentum, tol=1e-14, max_iter=30):
    """Scale f by exp(a + b.v) so total mass and momentum equal the targets."""
    d = grid.dim
    w = grid.v_weights * grid.dx_vol
    V = grid.v_mesh.reshape(d, -1)
    colsum = (f * w).reshape(-1, V.shape[1]).sum(axis=0)   # sum over x per velocity
    if not colsum.any():
        return f
    phi = np.vstack([np.ones(V.shape[1]), V])               # (d+1, Nv)
    target = np.concatenate([[mass], momentum])
    lam = np.zeros(d + 1)
    for _ in range(max_iter):
        e = colsum * np.exp(lam @ phi)
        g = phi @ e - target
        if np.max(np.abs(g)) <= tol * max(abs(mass), 1e-300):
            break
        J = (phi * e) @ phi.T
        lam = lam - np.linalg.solve(J, g)
    factor = np.exp(lam @ phi).reshape(grid.nv)
    return f * factor.reshape((1,) * d + grid.nv)


def coupled_step(state: SystemState, dt: float, cfg, grid: PhaseGrid) -> SystemState:
    """Advance the full system by dt.

    Conservative form: the fluid receives minus exactly the momentum the drag
    hands to the particles on each node, Delta j = F (1 - e^{-rho dt}) with
    F = int (u - v) f dv, and the optional global fix-up restores total
    particle mass and momentum lost to interpolation.  Symmetrized form:
    the u-equation gets -F frozen at step start, as in the linearised scheme.
    """
    d = grid.dim
    f, rho, u = state.f, state.rho, state.u
    macro = state.macro or compute_moments(f, grid, T_ref=cfg.T_ref, floor=cfg.moment_floor)
    F = coupling_force_density(f, u, grid)
    M = local_maxwellian(macro, grid)
    f_new = kinetic_step(f, rho, u, macro, dt, grid, cfg, maxwellian=M)

    if cfg.fluid_form == "conservative":
        dj = F * (-np.expm1(-rho * dt))[None]
        if cfg.conservative_fixup:
            mass = float(np.sum(macro.rho_f) * grid.dx_vol)
            mom = np.array([float(np.sum(macro.rho_f * macro.u_f[i]) * grid.dx_vol)
                            for i in range(d)])
            mom += dj.reshape(d, -1).sum(axis=1) * grid.dx_vol
            f_new = _global_fixup(f_new, grid, mass, mom)
        rho_new, u_new = fluid_step_conservative(
            rho, u, -dj / dt, cfg.gamma, cfg.mu, dt, grid, cfl=cfg.cfl, cg_tol=cfg.cg_tol)
        h_new = rho_new ** (0.5 * (cfg.gamma - 1.0)) - 1.0
    else:
        inp = FluidStepInputs(state.h, u, state.h, u, F, cfg.gamma, cfg.mu, dt, state.t)
        h_new, u_new = fluid_step(inp, grid, cfg.implicit_viscosity, cfg.cfl, cfg.cg_tol)
        rho_new = from_symmetrized(h_new, cfg.gamma)

    macro_new = compute_moments(f_new, grid, T_ref=cfg.T_ref, floor=cfg.moment_floor)
    return SystemState(f_new, rho_new, h_new, u_new, cfg.gamma, state.t + dt, macro_new)


# -- time marching ---------------------------------------------------------------

@dataclass
class SimulationResult:
    state: SystemState
    rows: list[DiagnosticsRow]
    totals: list[Totals]
    snapshots: list[str] = field(default_factory=list)
    steps: int = 0


def step_count(t_span: float, dt: float) -> tuple[int, float]:
    """Number of equal steps covering t_span with step <= dt, and that step."""
    if t_span <= 0:
        return 0, dt
    n = max(1, int(math.ceil(t_span / dt - 1e-9)))
    return n, t_span / n


def run_simulation(cfg, init: SystemState | None = None, grid: PhaseGrid | None = None,
                   out_dir: str | None = None, on_row: Callable | None = None,
                   snapshot_every: int | None = None, diagnostics: bool = True,
                   ref: Totals | None = None) -> SimulationResult:
    """March from init.t to cfg.t_final with uniform steps no larger than cfg.dt.

    One diagnostics row per step (plus the initial one) is handed to ``on_row``
    and collected.  With ``out_dir`` snapshots go to ``out_dir/snap_NNNNNN``
    at step 0, every ``snapshot_every`` steps and at the end.  A runtime error
    or a violated positivity monitor dumps the last good state to
    ``out_dir/abort_dump`` and raises :class:`SimulationAbort`.
    """
    from .io import write_snapshot

    grid = grid or grid_from_config(cfg)
    state = init if init is not None else initial_state(cfg, grid)
    if state.macro is None:
        state = SystemState.build(state.f, state.rho, state.u, cfg.gamma, state.t, grid, cfg)
    every = cfg.snapshot_every if snapshot_every is None else snapshot_every
    n, dt = step_count(cfg.t_final - state.t, cfg.dt)
    ref = ref or state_totals(state, grid)
    result = SimulationResult(state, [], [ref])

    def emit(st):
        if diagnostics:
            row = compute_row(st, grid, cfg, ref)
            result.rows.append(row)
            if on_row is not None:
                on_row(row)

    def snap(st, step):
        if out_dir is not None:
            path = os.path.join(out_dir, f"snap_{step:06d}")
            write_snapshot(st, path, grid, cfg)
            result.snapshots.append(path)

    emit(state)
    snap(state, 0)
    t0 = state.t
    for step in range(1, n + 1):
        try:
            new = coupled_step(state, dt, cfg, grid)
            new = SystemState(new.f, new.rho, new.h, new.u, new.gamma, t0 + step * dt, new.macro)
            mon = positivity_monitor(new, cfg)
            if mon.level == "violated":
                raise SolverError("; ".join(mon.messages))
        except SolverError as exc:
            dump = None
            if out_dir is not None:
                dump = os.path.join(out_dir, "abort_dump")
                write_snapshot(state, dump, grid, cfg)
            raise SimulationAbort(f"step {step} (t = {state.t + dt:.6g}) aborted: {exc}",
                                  dump) from exc
        state = new
        result.totals.append(state_totals(state, grid))
        emit(state)
        if every and step % every == 0 and step != n:
            snap(state, step)
    if n > 0:
        snap(state, n)
    result.state = state
    result.steps = n
    return result


# -- Picard iteration --------------------------------------------------------------

class Trajectory:
    """(f, h, u) sampled at times[0..nt]; arrays may live in disk-backed memmaps."""

    def __init__(self, times, grid: PhaseGrid, memmap_dir: str | None = None):
        self.times = np.asarray(times, dtype=float)
        nt = self.times.size
        shapes = {"f": (nt,) + grid.shape, "h": (nt,) + grid.nx, "u": (nt, grid.dim) + grid.nx}
        self.grid = grid
        self._dir = memmap_dir
        for name, shape in shapes.items():
            if memmap_dir is None:
                arr = np.zeros(shape)
            else:
                arr = np.lib.format.open_memmap(os.path.join(memmap_dir, f"{name}.npy"),
                                                mode="w+", dtype=float, shape=shape)
            setattr(self, name, arr)

    def __len__(self):
        return self.times.size

    def set(self, k, f, h, u):
        self.f[k] = f
        self.h[k] = h
        self.u[k] = u

    def state(self, k, gamma) -> SystemState:
        return SystemState.from_h(np.array(self.f[k]), np.array(self.h[k]),
                                  np.array(self.u[k]), gamma, float(self.times[k]))

    def nbytes(self) -> int:
        return self.f.nbytes + self.h.nbytes + self.u.nbytes


def cauchy_functional(a, b, grid: PhaseGrid, cfg) -> tuple[float, float]:
    """(E, D) between two states (f, h, u).

    E = ||f_a - f_b||^2_{L^2_{k-eps}} + ||h_a - h_b||^2_{H^1} + ||u_a - u_b||^2_{H^1},
    D = (c mu / 2) ||grad(u_a - u_b)||^2_{H^1} with c = cfg.dissipation_coeff.
    """
    fa, fb = np.asarray(a.f), np.asarray(b.f)
    if fa.shape != fb.shape or fa.shape != grid.shape:
        raise ValueError(f"mismatched grids: {fa.shape} vs {fb.shape} (grid {grid.shape})")
    df = fa - fb
    dh = np.asarray(a.h) - np.asarray(b.h)
    du = np.asarray(a.u) - np.asarray(b.u)
    E = weighted_lp_norm(df, grid, 2, cfg.k - cfg.eps) ** 2 \
        + sobolev_norm_periodic(dh, grid, 1) ** 2 + sobolev_norm_periodic(du, grid, 1) ** 2
    grad = np.stack([periodic_derivative(du[j], i, grid.dx[i], 1, 4)
                     for j in range(grid.dim) for i in range(grid.dim)])
    D = 0.5 * cfg.dissipation_coeff * cfg.mu * sobolev_norm_periodic(grad, grid, 1) ** 2
    return float(E), float(D)


@dataclass
class IterationTrace:
    times: np.ndarray
    E: list = field(default_factory=list)        # E^{n+1}(t_k) for n = 0, 1, ...
    D: list = field(default_factory=list)
    sup_E: list = field(default_factory=list)
    ratios: list = field(default_factory=list)   # r^n = sup E^{n+1} / sup E^n, n >= 1
    converged: bool = False
    non_contraction: bool = False
    messages: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.sup_E)


def _picard_sweep(prev: Trajectory, new: Trajectory, init: SystemState, cfg, grid, dt):
    """Solve the three linear problems over [0, T] with coefficients from ``prev``."""
    g = cfg.gamma
    f, h, u = init.f, init.h, init.u
    new.set(0, f, h, u)
    for k in range(len(prev) - 1):
        fn = np.asarray(prev.f[k])
        hn = np.asarray(prev.h[k])
        un = np.asarray(prev.u[k])
        rho_n = from_symmetrized(hn, g)
        macro = compute_moments(fn, grid, T_ref=cfg.T_ref, floor=cfg.moment_floor)
        M = local_maxwellian(macro, grid)
        F = coupling_force_density(fn, un, grid)
        f = kinetic_step(f, rho_n, un, macro, dt, grid, cfg, maxwellian=M)
        inp = FluidStepInputs(h, u, hn, un, F, g, cfg.mu, dt, float(prev.times[k]),
                              delta=cfg.delta)
        h, u = fluid_step(inp, grid, cfg.implicit_viscosity, cfg.cfl, cfg.cg_tol)
        new.set(k + 1, f, h, u)


@dataclass
class PicardResult:
    trajectory: Trajectory
    trace: IterationTrace


def picard_solve(cfg, init: SystemState | None = None, T: float | None = None,
                 n_max: int | None = None, tol: float | None = None,
                 grid: PhaseGrid | None = None) -> PicardResult:
    """Picard iteration on [0, T]; iterate 0 is the initial data frozen in time.

    Stops when sup_t E^{n+1} < tol or after n_max sweeps.  Three consecutive
    ratios r^n >= 1 are flagged as non-contraction (reported, not raised).
    """
    grid = grid or grid_from_config(cfg)
    init = init if init is not None else initial_state(cfg, grid)
    T = cfg.t_final if T is None else T
    n_max = cfg.picard_max_iters if n_max is None else n_max
    tol = cfg.picard_tol if tol is None else tol
    nsteps, dt = step_count(T, cfg.dt)
    times = np.linspace(0.0, nsteps * dt, nsteps + 1)

    need = 2 * (times.size * (int(np.prod(grid.shape)) + (grid.dim + 1) * int(np.prod(grid.nx))) * 8)
    tmp = None
    if need > cfg.picard_memory_cap_mb * 2 ** 20:
        tmp = tempfile.mkdtemp(prefix="nsbgk_picard_")
        warnings.warn(f"Picard trajectories need {need / 2 ** 20:.1f} MiB, above the cap of "
                      f"{cfg.picard_memory_cap_mb} MiB; using disk-backed buffers in {tmp}")

    def fresh(tag):
        if tmp is None:
            return Trajectory(times, grid)
        path = os.path.join(tmp, tag)
        os.makedirs(path, exist_ok=True)
        return Trajectory(times, grid, path)

    prev = fresh("a")
    for k in range(times.size):
        prev.set(k, init.f, init.h, init.u)
    cur = fresh("b")
    trace = IterationTrace(times)
    run = 0
    try:
        for n in range(n_max):
            _picard_sweep(prev, cur, init, cfg, grid, dt)
            E = np.empty(times.size)
            D = np.empty(times.size)
            for k in range(times.size):
                E[k], D[k] = cauchy_functional(_View(cur, k), _View(prev, k), grid, cfg)
            trace.E.append(E)
            trace.D.append(D)
            sup = float(E.max())
            if trace.sup_E:
                r = sup / trace.sup_E[-1] if trace.sup_E[-1] > 0 else (0.0 if sup == 0 else math.inf)
                trace.ratios.append(r)
                run = run + 1 if r >= 1 else 0
                if run >= 3 and not trace.non_contraction:
                    trace.non_contraction = True
                    trace.messages.append(f"non-contraction: r >= 1 for 3 consecutive "
                                          f"iterates (n = {n - 2}..{n})")
            trace.sup_E.append(sup)
            prev, cur = cur, prev
            if sup < tol:
                trace.converged = True
                break
        if not trace.converged:
            trace.messages.append(f"sup E = {trace.sup_E[-1]:.3e} still >= tol = {tol:.1e} "
                                  f"after {n_max} iterates")
        if tmp is not None:
            final = Trajectory(times, grid)
            final.f[:], final.h[:], final.u[:] = prev.f, prev.h, prev.u
            prev = final
    finally:
        if tmp is not None:
            shutil.rmtree(tmp, ignore_errors=True)
    return PicardResult(prev, trace)


class _View:
    __slots__ = ("f", "h", "u")

    def __init__(self, traj, k):
        self.f = traj.f[k]
        self.h = traj.h[k]
        self.u = traj.u[k]


__all__ = [
    "SystemState", "initial_state", "coupled_step", "run_simulation", "SimulationResult",
    "step_count", "Trajectory", "cauchy_functional", "IterationTrace", "picard_solve",
    "PicardResult",
]
