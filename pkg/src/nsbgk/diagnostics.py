"""Weighted norms, modulated energy, conservation drifts and runtime monitors.

All reductions use numpy's pairwise summation in a fixed order, so a given
state always produces bit-identical numbers.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import PhaseGrid, check_shapes
from .moments import compute_moments, l2_velocity, velocity_sum
from .stencils import bounded_derivative, periodic_derivative


def _vals(f):
    return np.asarray(getattr(f, "values", f), dtype=float)


def _weighted(f, grid, k):
    return grid.weight(k).reshape((1,) * grid.dim + grid.nv) * f


def _integrate(a, grid):
    """int int a dx dv with the grid quadrature."""
    return float(velocity_sum(a, grid).sum() * grid.dx_vol)


def weighted_lp_norm(f, grid: PhaseGrid, p=2, k: float = 1.5) -> float:
    """||e^{<v>^k} f||_{L^p(dx dv)}; p in {1, 2} or inf."""
    f = _vals(f)
    check_shapes(grid, f=f)
    if p in (np.inf, "inf", "sup"):
        return weighted_sup_norm(f, grid, k)
    if p not in (1, 2):
        raise ValueError(f"p must be 1, 2 or inf, got {p}")
    wf = np.abs(_weighted(f, grid, k))
    if p == 1:
        return _integrate(wf, grid)
    return math.sqrt(_integrate(wf * wf, grid))


def weighted_sup_norm(f, grid: PhaseGrid, k: float = 1.5) -> float:
    f = _vals(f)
    return float(np.max(np.abs(_weighted(f, grid, k)), initial=0.0))


def multi_indices(n_axes: int, s: int):
    """All multi-indices of total order <= s over ``n_axes`` axes, lowest order first."""
    out = []
    for order in range(s + 1):
        for combo in itertools.combinations_with_replacement(range(n_axes), order):
            idx = [0] * n_axes
            for c in combo:
                idx[c] += 1
            out.append(tuple(idx))
    return out


def phase_derivative(f, grid: PhaseGrid, index) -> np.ndarray:
    """d_x^alpha d_v^beta f; ``index`` lists orders for (x_1..x_d, v_1..v_d)."""
    d = grid.dim
    out = f
    for ax, order in enumerate(index):
        if order == 0:
            continue
        if ax < d:
            out = periodic_derivative(out, ax, grid.dx[ax], order=order, accuracy=4)
        else:
            out = bounded_derivative(out, ax, grid.dv[ax - d], order=order)
    return out


def weighted_sobolev_terms(f, grid: PhaseGrid, s: int, k: float) -> dict:
    """Squared weighted L^2 norm of each derivative d_x^alpha d_v^beta f, |alpha|+|beta| <= s."""
    f = _vals(f)
    check_shapes(grid, f=f)
    if s not in (0, 1, 2, 3):
        raise ValueError(f"s must be 0..3, got {s}")
    w = grid.weight(k).reshape((1,) * grid.dim + grid.nv)
    terms = {}
    for idx in multi_indices(2 * grid.dim, s):
        df = w * phase_derivative(f, grid, idx)
        terms[idx] = _integrate(df * df, grid)
    return terms


def weighted_sobolev_norm(f, grid: PhaseGrid, s: int, k: float = 1.5) -> float:
    """H^s_k norm: (sum_{|alpha|+|beta|<=s} ||e^{<v>^k} d_x^alpha d_v^beta f||_2^2)^(1/2)."""
    return math.sqrt(sum(weighted_sobolev_terms(f, grid, s, k).values()))


def weighted_w1inf_norm(f, grid: PhaseGrid, k: float = 1.5) -> float:
    """W^{1,inf}_k: weighted sup of f plus weighted sups of its first derivatives."""
    f = _vals(f)
    w = grid.weight(k).reshape((1,) * grid.dim + grid.nv)
    total = 0.0
    for idx in multi_indices(2 * grid.dim, 1):
        total += float(np.max(np.abs(w * phase_derivative(f, grid, idx))))
    return total


def sobolev_norm_periodic(a, grid: PhaseGrid, s: int) -> float:
    """Unweighted H^s norm of a spatial field (scalar, or vector with leading axis d)."""
    a = np.asarray(a, dtype=float)
    comps = a if a.shape != grid.nx else a[None]
    total = 0.0
    for c in comps:
        for idx in multi_indices(grid.dim, s):
            da = c
            for ax, order in enumerate(idx):
                if order:
                    da = periodic_derivative(da, ax, grid.dx[ax], order=order, accuracy=4)
            total += float(np.sum(da * da) * grid.dx_vol)
    return math.sqrt(total)


def fluid_energy_h3(h, u, gamma: float, grid: PhaseGrid) -> float:
    """(4 gamma/(gamma-1)^2) ||h||_{H^3}^2 + ||u||_{H^3}^2 with 1 + h = rho^((gamma-1)/2)."""
    c = 4.0 * gamma / (gamma - 1.0) ** 2
    return c * sobolev_norm_periodic(h, grid, 3) ** 2 + sobolev_norm_periodic(u, grid, 3) ** 2


# -- modulated energy ---------------------------------------------------------

@dataclass
class ModulatedEnergy:
    L: float
    v_c: np.ndarray
    m_c: np.ndarray
    rho_c: float
    kinetic: float
    fluid_kinetic: float
    density: float
    alignment: float


def modulated_energy(f, rho, u, grid: PhaseGrid) -> ModulatedEnergy:
    """L = int int |v - v_c|^2 f + int rho |u - m_c|^2 + int (rho - rho_c)^2 + |v_c - m_c|^2.

    rho_c is the mean fluid density; v_c falls back to m_c when there are no
    particles.
    """
    f = _vals(f)
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    check_shapes(grid, f=f, rho=rho, u=u)
    d = grid.dim
    fluid_mass = float(rho.sum() * grid.dx_vol)
    m_c = np.array([float((rho * u[i]).sum() * grid.dx_vol) for i in range(d)]) / fluid_mass
    rho_c = fluid_mass / grid.volume
    mass = _integrate(f, grid)
    if mass > 0:
        v_c = np.array([_integrate(f * grid.v_component(i), grid) for i in range(d)]) / mass
    else:
        v_c = m_c.copy()
    c2 = sum((grid.v_component(i) - v_c[i]) ** 2 for i in range(d))
    kin = _integrate(c2 * f, grid)
    fk = float(sum((rho * (u[i] - m_c[i]) ** 2).sum() for i in range(d)) * grid.dx_vol)
    dens = float(((rho - rho_c) ** 2).sum() * grid.dx_vol)
    align = float(np.sum((v_c - m_c) ** 2))
    return ModulatedEnergy(kin + fk + dens + align, v_c, m_c, rho_c, kin, fk, dens, align)


@dataclass
class DecayFit:
    amplitude: float
    rate: float
    residual: float
    n_used: int
    n_excluded: int


def decay_fit(t, L) -> DecayFit:
    """Least-squares fit log L = log A - rate t; residual is the RMS log error.

    Non-positive L values are dropped and counted in ``n_excluded``.
    """
    t = np.asarray(t, dtype=float)
    L = np.asarray(L, dtype=float)
    keep = np.isfinite(L) & (L > 0)
    n_ex = int(np.count_nonzero(~keep))
    t, y = t[keep], np.log(L[keep])
    if t.size < 10:
        raise ValueError(f"decay_fit needs >= 10 positive samples, got {t.size} "
                         f"({n_ex} excluded)")
    A = np.column_stack([np.ones_like(t), -t])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return DecayFit(float(np.exp(coef[0])), float(coef[1]),
                    float(np.sqrt(np.mean(res * res))), int(t.size), n_ex)


# -- conservation -------------------------------------------------------------

@dataclass
class Totals:
    t: float
    particle_mass: float
    fluid_mass: float
    momentum: np.ndarray
    momentum_scale: float


def totals(f, rho, u, grid: PhaseGrid, t: float = 0.0) -> Totals:
    f = _vals(f)
    d = grid.dim
    pm = _integrate(f, grid)
    fm = float(np.sum(rho) * grid.dx_vol)
    mom = np.array([_integrate(f * grid.v_component(i), grid)
                    + float(np.sum(rho * u[i]) * grid.dx_vol) for i in range(d)])
    speed = np.sqrt(grid.speed2).reshape((1,) * d + grid.nv)
    scale = _integrate(speed * np.abs(f), grid) \
        + float(np.sum(rho * np.sqrt(np.sum(u * u, axis=0))) * grid.dx_vol)
    return Totals(t, pm, fm, mom, scale)


def state_totals(state, grid: PhaseGrid) -> Totals:
    return totals(state.f, state.rho, state.u, grid, state.t)


def _rel(a, b):
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


@dataclass
class DriftTable:
    t: np.ndarray
    particle_mass: np.ndarray
    fluid_mass: np.ndarray
    momentum: np.ndarray

    @property
    def max_drifts(self) -> dict:
        return {"particle_mass": float(self.particle_mass.max(initial=0.0)),
                "fluid_mass": float(self.fluid_mass.max(initial=0.0)),
                "momentum": float(self.momentum.max(initial=0.0))}


def conservation_report(traj, grid: PhaseGrid | None = None) -> DriftTable:
    """Relative drifts against the first entry.

    ``traj`` holds :class:`Totals` or states (then ``grid`` is required).
    Momentum drift is |P(t) - P(0)| over the momentum scale
    int int |v| f + int rho |u| at t = 0, which stays meaningful when P(0) = 0.
    """
    tots = [x if isinstance(x, Totals) else state_totals(x, grid) for x in traj]
    if not tots:
        raise ValueError("empty trajectory")
    t0 = tots[0]
    pscale = t0.momentum_scale if t0.momentum_scale > 0 else 1.0
    return DriftTable(
        t=np.array([x.t for x in tots]),
        particle_mass=np.array([_rel(x.particle_mass, t0.particle_mass) for x in tots]),
        fluid_mass=np.array([_rel(x.fluid_mass, t0.fluid_mass) for x in tots]),
        momentum=np.array([float(np.max(np.abs(x.momentum - t0.momentum))) / pscale
                           for x in tots]),
    )


# -- monitors -----------------------------------------------------------------

LEVELS = ("ok", "warn", "violated")


@dataclass
class MonitorStatus:
    level: str
    inf_rho_sym: float
    location: tuple
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.level == "ok"


def positivity_monitor(state, cfg, grid: PhaseGrid | None = None) -> MonitorStatus:
    """Classify inf rho^((gamma-1)/2) against delta: ok (>= delta), warn
    ([delta/2, delta)), violated (< delta/2).  With a grid, also flags the
    monitored H^3 energy against cfg.monitor_M and the optional lower bound.
    """
    rho = np.asarray(state.rho, dtype=float)
    sym = np.maximum(rho, 0.0) ** (0.5 * (cfg.gamma - 1.0))
    i = int(np.argmin(sym))
    val = float(sym.flat[i])
    loc = tuple(int(j) for j in np.unravel_index(i, sym.shape))
    if val >= cfg.delta:
        level = "ok"
        msgs = []
    elif val >= 0.5 * cfg.delta:
        level = "warn"
        msgs = [f"inf rho^((gamma-1)/2) = {val:.4g} below delta = {cfg.delta} at node {loc}"]
    else:
        level = "violated"
        msgs = [f"inf rho^((gamma-1)/2) = {val:.4g} below delta/2 = {0.5 * cfg.delta} "
                f"at node {loc}"]
    if grid is not None:
        e = fluid_energy_h3(state.h, state.u, cfg.gamma, grid)
        if e > cfg.monitor_M:
            msgs.append(f"H^3 fluid energy {e:.4g} exceeds M = {cfg.monitor_M}")
            if level == "ok":
                level = "warn"
        if cfg.eps1 is not None:
            floor = cfg.eps1 * np.exp(-(1.0 + cfg.a) * (1.0 + grid.speed2) ** (0.5 * cfg.k))
            f = _vals(state.f)
            gap = f - floor.reshape((1,) * grid.dim + grid.nv)
            if np.any(gap < 0):
                j = tuple(int(x) for x in np.unravel_index(int(np.argmin(gap)), gap.shape))
                msgs.append(f"f below eps1 exp(-(1+a)<v>^k) at phase node {j}")
                if level == "ok":
                    level = "warn"
    return MonitorStatus(level, val, loc, msgs)


# -- per-step row -------------------------------------------------------------

ROW_VERSION = 1


def row_columns(dim: int) -> list[str]:
    ax = "xyz"[:dim]
    return (["t", "f_L2k", "f_H2k", "f_Linfk", "f_W1infk", "fluid_H3",
             "inf_rho_sym", "inf_rho_f", "inf_T_f", "inf_g", "L"]
            + [f"v_c_{a}" for a in ax] + [f"m_c_{a}" for a in ax]
            + ["rho_c", "particle_mass", "fluid_mass"] + [f"momentum_{a}" for a in ax]
            + ["drift_particle_mass", "drift_fluid_mass", "drift_momentum", "monitor"])


@dataclass
class DiagnosticsRow:
    values: dict

    def as_list(self, dim: int) -> list:
        return [self.values[c] for c in row_columns(dim)]

    def format(self, dim: int) -> list[str]:
        out = []
        for v in self.as_list(dim):
            out.append(v if isinstance(v, str) else "%.17g" % v)
        return out


def compute_row(state, grid: PhaseGrid, cfg, ref: Totals | None = None) -> DiagnosticsRow:
    """Every monitored quantity for one state; drifts are against ``ref``."""
    f = _vals(state.f)
    k = cfg.k
    macro = compute_moments(f, grid, T_ref=cfg.T_ref, floor=cfg.moment_floor)
    me = modulated_energy(f, state.rho, state.u, grid)
    tot = state_totals(state, grid)
    drift = conservation_report([ref if ref is not None else tot, tot])
    mon = positivity_monitor(state, cfg, grid)
    live = ~macro.vacuum
    v = {
        "t": float(state.t),
        "f_L2k": weighted_lp_norm(f, grid, 2, k),
        "f_H2k": weighted_sobolev_norm(f, grid, 2, k),
        "f_Linfk": weighted_sup_norm(f, grid, k),
        "f_W1infk": weighted_w1inf_norm(f, grid, k),
        "fluid_H3": fluid_energy_h3(state.h, state.u, cfg.gamma, grid),
        "inf_rho_sym": mon.inf_rho_sym,
        "inf_rho_f": float(macro.rho_f.min()),
        "inf_T_f": float(macro.T_f[live].min()) if live.any() else float("nan"),
        "inf_g": float(l2_velocity(f, grid).min()),
        "L": me.L,
        "rho_c": me.rho_c,
        "particle_mass": tot.particle_mass,
        "fluid_mass": tot.fluid_mass,
        "drift_particle_mass": float(drift.particle_mass[-1]),
        "drift_fluid_mass": float(drift.fluid_mass[-1]),
        "drift_momentum": float(drift.momentum[-1]),
        "monitor": mon.level,
    }
    for i, a in enumerate("xyz"[:grid.dim]):
        v[f"v_c_{a}"] = float(me.v_c[i])
        v[f"m_c_{a}"] = float(me.m_c[i])
        v[f"momentum_{a}"] = float(tot.momentum[i])
    return DiagnosticsRow(v)


__all__ = [
    "weighted_lp_norm", "weighted_sup_norm", "weighted_sobolev_norm", "weighted_sobolev_terms",
    "weighted_w1inf_norm", "sobolev_norm_periodic", "fluid_energy_h3", "multi_indices",
    "phase_derivative", "modulated_energy", "ModulatedEnergy", "decay_fit", "DecayFit",
    "totals", "state_totals", "Totals", "conservation_report", "DriftTable",
    "positivity_monitor", "MonitorStatus", "LEVELS", "DiagnosticsRow", "compute_row",
    "row_columns", "ROW_VERSION",
]
