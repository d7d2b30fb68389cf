"""Characteristics of the drag field and the exponential semi-Lagrangian kinetic step.

Along dX/ds = V, dV/ds = rho(X)(u(X) - V) the kinetic equation reduces to

    df/ds = (d rho - nu) f + nu M,

which is integrated exactly over one step with its coefficients held fixed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import PhaseGrid, check_shapes
from .errors import BlowUpError, CFLError, SolverError
from .maxwellian import collision_frequency, local_maxwellian
from .moments import MacroFields, compute_moments
from .stencils import cubic_interpolate, interpolate_periodic_field


@dataclass(frozen=True)
class CharState:
    """Phase point(s) on a characteristic; X and V have shape (d, ...)."""

    X: np.ndarray
    V: np.ndarray
    s: float

    def wrapped(self, lengths) -> "CharState":
        L = np.asarray(lengths, dtype=float).reshape((-1,) + (1,) * (np.ndim(self.X) - 1))
        return CharState(np.mod(self.X, L), self.V, self.s)


class FieldSeries:
    """Fluid density and velocity sampled at increasing times.

    Values between samples are linear in time; in space they are
    interpolated with periodic cubics.  A single sample means the fields are
    constant in time.
    """

    def __init__(self, times, rho, u, grid: PhaseGrid):
        self.times = np.atleast_1d(np.asarray(times, dtype=float))
        self.rho = np.asarray(rho, dtype=float).reshape((self.times.size,) + grid.nx)
        self.u = np.asarray(u, dtype=float).reshape((self.times.size, grid.dim) + grid.nx)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("field sample times must increase strictly")
        self.grid = grid

    @classmethod
    def constant(cls, rho, u, grid: PhaseGrid) -> "FieldSeries":
        rho = np.broadcast_to(np.asarray(rho, dtype=float), grid.nx)
        u = np.asarray(u, dtype=float)
        if u.ndim <= 1:
            u = u.reshape((-1,) + (1,) * grid.dim)
        u = np.broadcast_to(u, (grid.dim,) + grid.nx)
        return cls([0.0], rho[None], u[None], grid)

    def covers(self, t0, t1) -> bool:
        if self.times.size == 1:
            return True
        lo, hi = min(t0, t1), max(t0, t1)
        slack = 1e-12 * max(1.0, abs(self.times[-1]))
        return lo >= self.times[0] - slack and hi <= self.times[-1] + slack

    def at_time(self, s):
        if self.times.size == 1:
            return self.rho[0], self.u[0]
        j = int(np.clip(np.searchsorted(self.times, s, side="right") - 1, 0, self.times.size - 2))
        t0, t1 = self.times[j], self.times[j + 1]
        th = min(max((s - t0) / (t1 - t0), 0.0), 1.0)
        return ((1 - th) * self.rho[j] + th * self.rho[j + 1],
                (1 - th) * self.u[j] + th * self.u[j + 1])

    def evaluate(self, X, s):
        """(rho, u) at positions X (shape (d, ...)) and time s."""
        rho, u = self.at_time(s)
        dx = self.grid.dx
        r = interpolate_periodic_field(rho, X, dx)
        uu = np.stack([interpolate_periodic_field(u[i], X, dx) for i in range(self.grid.dim)])
        return r, uu


def _drag_rhs(fields, X, V, s):
    rho, u = fields.evaluate(X, s)
    return V, rho * (u - V)


def advance_characteristic(z: CharState, fields: FieldSeries, t_from: float, t_to: float,
                           direction: int | None = None, dt: float = 1e-3,
                           v_limit: float | None = None) -> CharState:
    """Heun integration of dX/ds = V, dV/ds = rho(u - V) from t_from to t_to.

    ``direction`` (+1 forward, -1 backward) is optional and only checked
    against the sign of t_to - t_from.  Blow-up is declared once |V| exceeds
    10 V_max.
    """
    grid = fields.grid
    span = t_to - t_from
    if direction is not None and span != 0 and np.sign(span) != np.sign(direction):
        raise ValueError(f"direction {direction} disagrees with t_from={t_from}, t_to={t_to}")
    if not fields.covers(t_from, t_to):
        raise ValueError(f"field samples [{fields.times[0]}, {fields.times[-1]}] do not cover "
                         f"[{min(t_from, t_to)}, {max(t_from, t_to)}]")
    limit = 10.0 * max(grid.v_max) if v_limit is None else v_limit
    X = np.array(z.X, dtype=float)
    V = np.array(z.V, dtype=float)
    n = max(1, int(np.ceil(abs(span) / dt - 1e-9)))
    h = span / n
    s = t_from
    for _ in range(n):
        k1x, k1v = _drag_rhs(fields, X, V, s)
        Xp, Vp = X + h * k1x, V + h * k1v
        k2x, k2v = _drag_rhs(fields, Xp, Vp, s + h)
        X = X + 0.5 * h * (k1x + k2x)
        V = V + 0.5 * h * (k1v + k2v)
        s += h
        speed = np.sqrt(np.sum(V * V, axis=0))
        if not np.all(speed <= limit):
            raise BlowUpError(f"characteristic velocity {np.nanmax(speed):.3e} exceeds "
                              f"10 V_max = {limit:.3e} at s = {s:.6g}")
    return CharState(X, V, t_to).wrapped(grid.lengths)


@dataclass
class GrowthStats:
    max_ratio: float
    ratios: np.ndarray
    speeds: np.ndarray
    per_speed: dict


def velocity_growth_ratio(v_samples, fields: FieldSeries, t: float, x_samples=None,
                          dt: float = 1e-3) -> GrowthStats:
    """|V~(0)| / (1 + |v|) for backward characteristics started at (x, v, t).

    ``v_samples`` has shape (m, d) (or (m,) in 1D); every velocity is paired
    with every position in ``x_samples`` (default: all spatial nodes).
    ``per_speed`` maps each distinct |v| to the max ratio over its samples.
    """
    grid = fields.grid
    d = grid.dim
    v = np.asarray(v_samples, dtype=float).reshape(-1, d)
    if x_samples is None:
        xs = grid.x_mesh.reshape(d, -1).T
    else:
        xs = np.asarray(x_samples, dtype=float).reshape(-1, d)
    X = np.repeat(xs.T[:, :, None], v.shape[0], axis=2)
    V = np.repeat(v.T[:, None, :], xs.shape[0], axis=1)
    end = advance_characteristic(CharState(X, V, t), fields, t, 0.0, -1, dt=dt,
                                 v_limit=np.inf)
    speed0 = np.sqrt(np.sum(end.V ** 2, axis=0))
    vnorm = np.sqrt(np.sum(v * v, axis=1))
    ratios = speed0 / (1.0 + vnorm[None, :])
    per_v = ratios.max(axis=0)
    per_speed = {}
    for s in np.unique(np.round(vnorm, 12)):
        per_speed[float(s)] = float(per_v[np.isclose(vnorm, s, rtol=0, atol=1e-12)].max())
    return GrowthStats(float(ratios.max()), per_v, vnorm, per_speed)


def phi1(z):
    """(e^z - 1)/z with its Taylor limit for |z| < 1e-10."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-10
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)


def kinetic_cfl_limit(rho, u, grid: PhaseGrid) -> float:
    """min(dx/V_max, dv/max|rho(u - v)|) over axes."""
    lim = min(dx / vm for dx, vm in zip(grid.dx, grid.v_max))
    rmax = float(np.max(np.abs(rho)))
    for i in range(grid.dim):
        acc = rmax * (float(np.max(np.abs(u[i]))) + grid.v_max[i])
        if acc > 0:
            lim = min(lim, grid.dv[i] / acc)
    return lim


def _trace_back(grid, rho, u, dt):
    # one Heun step backward in phase space, fields frozen, from every node
    d = grid.dim
    X0 = np.broadcast_to(grid.x_mesh.reshape((d,) + grid.nx + (1,) * d), (d,) + grid.shape)
    V0 = np.broadcast_to(grid.v_mesh.reshape((d,) + (1,) * d + grid.nv), (d,) + grid.shape)
    bshape = grid.nx + (1,) * d
    acc0 = np.stack([rho.reshape(bshape) * (u[i].reshape(bshape) - V0[i]) for i in range(d)])
    Xp = X0 - dt * V0
    Vp = V0 - dt * acc0
    rp = interpolate_periodic_field(rho, Xp, grid.dx)
    up = np.stack([interpolate_periodic_field(u[i], Xp, grid.dx) for i in range(d)])
    accp = rp * (up - Vp)
    Xf = X0 - 0.5 * dt * (V0 + Vp)
    Vf = V0 - 0.5 * dt * (acc0 + accp)
    return Xf, Vf


def _phase_coords(grid, X, V):
    d = grid.dim
    coords = [X[i] / grid.dx[i] for i in range(d)]
    for i in range(d):
        coords.append((V[i] - grid.v_nodes[i][0]) / grid.dv[i])
    return coords


def kinetic_step(f, rho, u, macro: MacroFields | None, dt: float, grid: PhaseGrid, cfg,
                 maxwellian: np.ndarray | None = None, check_cfl: bool = True) -> np.ndarray:
    """Advance f by dt along backward characteristics of the frozen drag field.

    f' = f(foot) e^{a dt} + S dt phi1(a dt), a = d rho - nu, S = nu M, with a
    and S averaged between the arrival node and the foot point.  Returns the
    new array (callers wrap it in a KineticState).
    """
    f = np.asarray(getattr(f, "values", f), dtype=float)
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    check_shapes(grid, f=f, rho=rho, u=u)
    d = grid.dim
    if check_cfl:
        lim = cfg.cfl * kinetic_cfl_limit(rho, u, grid)
        if dt > lim * (1 + 1e-12):
            raise CFLError(f"kinetic CFL violated: dt = {dt:.3e} > {lim:.3e} "
                           f"(cfl={cfg.cfl} x min(dx/V_max, dv/max|rho(u-v)|))")
    if macro is None:
        macro = compute_moments(f, grid, T_ref=cfg.T_ref, floor=cfg.moment_floor)
    if maxwellian is None:
        maxwellian = local_maxwellian(macro, grid)
    nu = collision_frequency(macro, cfg.alpha)
    a_x = d * rho - nu
    src = nu.reshape(grid.nx + (1,) * d) * maxwellian

    Xf, Vf = _trace_back(grid, rho, u, dt)
    periodic = [True] * d + [False] * d
    coords = _phase_coords(grid, Xf, Vf)
    foot = np.maximum(cubic_interpolate(f, coords, periodic), 0.0)
    if cfg.clamp_upper:
        from .stencils import stencil_max
        foot = np.minimum(foot, stencil_max(f, coords, periodic))
    src_foot = np.maximum(cubic_interpolate(src, coords, periodic), 0.0)
    a_foot = interpolate_periodic_field(a_x, Xf, grid.dx)
    a = 0.5 * (a_x.reshape(grid.nx + (1,) * d) + a_foot)
    S = 0.5 * (src + src_foot)
    z = a * dt
    out = foot * np.exp(z) + S * dt * phi1(z)
    bad = ~np.isfinite(out)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SolverError(f"non-finite kinetic density after step at phase node {idx}")
    return out


__all__ = [
    "CharState", "FieldSeries", "advance_characteristic", "velocity_growth_ratio",
    "GrowthStats", "kinetic_step", "kinetic_cfl_limit", "phi1",
]
