"""Discrete local Maxwellian, the BGK operator and its diagnostics.

The sampled Gaussian does not reproduce its own moments on a truncated grid.
:func:`discrete_maxwellian` therefore fits exp(a + b.xi + c|xi|^2), with
xi = (v - u)/sqrt(T), so that mass, momentum and energy sums are exact.  The
fit minimises the convex dual  sum_v w exp(lambda.phi) - lambda.target  by
damped Newton, one small system per spatial node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import PhaseGrid, check_shapes
from .errors import MaxwellianError
from .moments import MacroFields, compute_moments, velocity_sum


def _basis(u_node, T_node, grid):
    # phi = (1, xi_1..xi_d, |xi|^2) per (node, velocity): shape (N, Nv, d+2)
    d = grid.dim
    v = grid.v_mesh.reshape(d, -1).T  # (Nv, d)
    xi = (v[None, :, :] - u_node[:, None, :]) / np.sqrt(T_node)[:, None, None]
    phi = np.empty(xi.shape[:2] + (d + 2,))
    phi[..., 0] = 1.0
    phi[..., 1:d + 1] = xi
    phi[..., d + 1] = np.sum(xi * xi, axis=-1)
    return phi


def _dual(phi, w, target, lam):
    e = np.exp(np.einsum("nvk,nk->nv", phi, lam))
    return np.einsum("nv,v->n", e, w) - lam @ target, e


def _fit_exponential_family(phi, w, target, lam, tol, max_iter):
    """Damped Newton on the dual; returns (lambda, residual).

    A node leaves the iteration once its residual is <= tol or the line
    search can no longer decrease the dual (round-off floor).
    """
    obj, e = _dual(phi, w, target, lam)
    done = np.zeros(lam.shape[0], dtype=bool)
    for it in range(max_iter + 1):
        ew = e * w
        grad = np.einsum("nv,nvk->nk", ew, phi) - target
        res = np.max(np.abs(grad), axis=1)
        done |= res <= tol
        act = np.flatnonzero(~done)
        if act.size == 0 or it == max_iter:
            break
        J = np.einsum("nv,nvk,nvl->nkl", ew[act], phi[act], phi[act])
        step = -np.linalg.solve(J, grad[act][..., None])[..., 0]
        alpha = np.ones(act.size)
        trial = lam[act] + step
        t_obj, t_e = _dual(phi[act], w, target, trial)
        res_act = res[act]
        stuck = np.zeros(act.size, dtype=bool)
        for _ls in range(40):
            # near the optimum the dual changes below round-off, so a step
            # that shrinks the gradient is also accepted
            t_res = np.max(np.abs(np.einsum("nv,nvk->nk", t_e * w, phi[act]) - target), axis=1)
            worse = np.flatnonzero(~((t_obj < obj[act]) | (t_res < res_act)) & ~stuck)
            if worse.size == 0:
                break
            if _ls == 39:
                stuck[worse] = True
                break
            alpha[worse] *= 0.5
            trial[worse] = lam[act][worse] + alpha[worse, None] * step[worse]
            t_obj[worse], t_e[worse] = _dual(phi[act][worse], w, target, trial[worse])
        moved = ~stuck
        lam[act[moved]] = trial[moved]
        obj[act[moved]] = t_obj[moved]
        e[act[moved]] = t_e[moved]
        done[act[stuck]] = True
    return lam, res


def discrete_maxwellian(rho, u, T, grid: PhaseGrid, tol: float = 1e-15,
                        accept: float = 1e-10, max_iter: int = 60) -> np.ndarray:
    """Grid Maxwellian whose discrete (1, v, |v|^2) moments equal
    (rho, rho u, d rho T + rho |u|^2).

    Newton runs to ``tol`` (or the round-off floor) in the normalised
    moments; a node whose final residual exceeds ``accept`` is an error.

    ``rho`` and ``T`` have shape ``nx``, ``u`` has shape ``(d,) + nx``.
    Nodes with rho == 0 return zeros.
    """
    d = grid.dim
    rho = np.asarray(rho, dtype=float)
    T = np.asarray(T, dtype=float)
    u = np.asarray(u, dtype=float)
    check_shapes(grid, rho=rho, u=u)
    check_shapes(grid, rho=T)
    out = np.zeros(grid.shape)
    rho_n = rho.reshape(-1)
    T_n = T.reshape(-1)
    u_n = u.reshape(d, -1).T
    if np.any(rho_n < 0):
        node = _node(np.argmin(rho_n), grid)
        raise MaxwellianError(f"negative density {rho_n.min():.3e} at node {node}")
    active = np.flatnonzero(rho_n > 0)
    if active.size == 0:
        return out
    bad_T = active[~(T_n[active] > 0)]
    if bad_T.size:
        i = bad_T[0]
        raise MaxwellianError(
            f"non-positive temperature T={T_n[i]:.3e} at active node {_node(i, grid)}")
    phi = _basis(u_n[active], T_n[active], grid)
    w = grid.v_weights.reshape(-1)
    target = np.zeros(d + 2)
    target[0] = 1.0
    target[d + 1] = float(d)
    lam = np.zeros((active.size, d + 2))
    lam[:, 0] = -0.5 * d * np.log(2.0 * math.pi * T_n[active])
    lam[:, d + 1] = -0.5
    lam, res = _fit_exponential_family(phi, w, target, lam, tol, max_iter)
    if not np.all(res <= accept):
        j = int(np.argmax(res))
        i = active[j]
        raise MaxwellianError(
            f"conservative projection did not converge at node {_node(i, grid)} "
            f"(rho={rho_n[i]:.3e}, u={u_n[i]}, T={T_n[i]:.3e}, residual={res[j]:.2e}); "
            f"T below the velocity resolution (dv^2 = {grid.dv[0] ** 2:.3e})?")
    vals = rho_n[active, None] * np.exp(np.einsum("nvk,nk->nv", phi, lam))
    flat = out.reshape(-1, int(np.prod(grid.nv)))
    flat[active] = vals
    return out


def _node(i, grid):
    return tuple(int(j) for j in np.unravel_index(int(i), grid.nx))


def local_maxwellian(macro: MacroFields, grid: PhaseGrid, **kw) -> np.ndarray:
    rho = np.where(macro.vacuum, 0.0, macro.rho_f)
    return discrete_maxwellian(rho, macro.u_f, macro.T_f, grid, **kw)


def collision_frequency(macro: MacroFields, alpha: float) -> np.ndarray:
    """nu = rho_f^alpha, set to 0 on vacuum nodes (no relaxation without particles)."""
    rho = np.where(macro.vacuum, 1.0, macro.rho_f)
    return np.where(macro.vacuum, 0.0, rho ** alpha)


def bgk_operator(f, grid: PhaseGrid, alpha: float, macro: MacroFields | None = None,
                 T_ref: float = 1.0, floor: float = 1e-12) -> np.ndarray:
    """Q(f) = nu(rho_f) (M(f) - f) with the conservative discrete Maxwellian."""
    f = getattr(f, "values", f)
    if macro is None:
        macro = compute_moments(f, grid, T_ref=T_ref, floor=floor)
    M = local_maxwellian(macro, grid)
    nu = collision_frequency(macro, alpha).reshape(grid.nx + (1,) * grid.dim)
    return nu * (M - f)


def envelope_ratio(v, rho, u, T, k: float):
    """e^{<v>^k} M(v) / [rho (2 pi T)^(-d/2) e^{-|u-v|^2/(4T)}] for the analytic Maxwellian.

    The prefactors cancel, leaving exp(<v>^k - |v-u|^2/(4T)).
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    r2 = np.sum((v - u) ** 2, axis=-1)
    br = np.sqrt(1.0 + np.sum(v * v, axis=-1))
    return np.exp(br ** k - r2 / (4.0 * T))


@dataclass
class EnvelopeReport:
    max_ratio: float
    argmax: tuple
    ratios: np.ndarray


def maxwellian_envelope_check(f, grid: PhaseGrid, k: float, T_ref: float = 1.0,
                              floor: float = 1e-12) -> EnvelopeReport:
    """Scan e^{<v>^k} M(f) against the widened Gaussian rho_f (2 pi T_f)^(-d/2) e^{-|u_f-v|^2/(4T_f)}.

    A finite maximum demonstrates the envelope with an empirical constant.
    """
    f = getattr(f, "values", f)
    d = grid.dim
    macro = compute_moments(f, grid, T_ref=T_ref, floor=floor)
    M = local_maxwellian(macro, grid)
    bshape = grid.nx + (1,) * d
    r2 = np.zeros(grid.shape)
    for i in range(d):
        r2 += (grid.v_component(i) - macro.u_f[i].reshape(bshape)) ** 2
    T = macro.T_f.reshape(bshape)
    env = macro.rho_f.reshape(bshape) * (2 * math.pi * T) ** (-0.5 * d) * np.exp(-r2 / (4 * T))
    weighted = grid.weight(k).reshape((1,) * d + grid.nv) * M
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(env > 0, weighted / env, 0.0)
    ratios[macro.vacuum] = 0.0
    idx = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
    return EnvelopeReport(float(ratios[idx]), tuple(int(i) for i in idx), ratios)


@dataclass
class LipschitzProbe:
    ratio: float
    in_box: bool
    warnings: list[str] = field(default_factory=list)


def _box_violations(macro, C1, C2, label):
    out = []
    speed = np.sqrt(np.sum(macro.u_f ** 2, axis=0))
    upper = macro.rho_f + speed + macro.T_f
    lower = macro.rho_f + macro.T_f
    if np.any(upper > C1):
        out.append(f"{label}: rho+|u|+T = {upper.max():.3e} exceeds C1 = {C1}")
    if np.any(lower < C2):
        out.append(f"{label}: rho+T = {lower.min():.3e} below C2 = {C2}")
    if np.any(macro.vacuum):
        out.append(f"{label}: vacuum nodes present")
    return out


def maxwellian_lipschitz_probe(f, g, grid: PhaseGrid, k: float, C1: float = 10.0,
                               C2: float = 0.1, T_ref: float = 1.0) -> LipschitzProbe:
    """||M(f) - M(g)||_{L^2_k} / ||f - g||_{L^2_k}, with the moment box checked."""
    from .diagnostics import weighted_lp_norm

    f = getattr(f, "values", f)
    g = getattr(g, "values", g)
    denom = weighted_lp_norm(f - g, grid, 2, k)
    mf = compute_moments(f, grid, T_ref=T_ref)
    mg = compute_moments(g, grid, T_ref=T_ref)
    warnings = _box_violations(mf, C1, C2, "f") + _box_violations(mg, C1, C2, "g")
    if denom == 0.0:
        return LipschitzProbe(0.0, not warnings, warnings)
    num = weighted_lp_norm(local_maxwellian(mf, grid) - local_maxwellian(mg, grid), grid, 2, k)
    return LipschitzProbe(num / denom, not warnings, warnings)


__all__ = [
    "discrete_maxwellian", "local_maxwellian", "collision_frequency", "bgk_operator",
    "envelope_ratio", "maxwellian_envelope_check", "EnvelopeReport",
    "maxwellian_lipschitz_probe", "LipschitzProbe", "velocity_sum",
]
