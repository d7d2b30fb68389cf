"""Compressible Navier-Stokes on the periodic box.

Two discretisations share the helpers here:

* :func:`fluid_step` advances the linearised symmetric form in (h, u) with
  frozen coefficients (1 + h_c, u_c); it is what the Picard iteration solves.
* :func:`fluid_step_conservative` advances (rho, rho u) in flux form, so the
  discrete mass and momentum totals telescope exactly.  Time marching uses it
  by default.

Both treat the viscous term with backward Euler, solved by conjugate
gradients on a symmetric positive definite system.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .domain import PhaseGrid
from .errors import CFLError, ConvergenceError, PositivityError, ValidationError
from .stencils import _shift, central2, upwind2


def _node(i, shape):
    return tuple(int(j) for j in np.unravel_index(int(i), shape))


def to_symmetrized(rho, gamma: float) -> np.ndarray:
    """h with 1 + h = rho^((gamma-1)/2)."""
    rho = np.asarray(rho, dtype=float)
    if not np.all(rho > 0):
        i = int(np.argmin(np.where(np.isnan(rho), -np.inf, rho)))
        raise ValidationError(f"density must be > 0, got {rho.flat[i]:.3e} at node "
                              f"{_node(i, rho.shape)}")
    return rho ** (0.5 * (gamma - 1.0)) - 1.0


def from_symmetrized(h, gamma: float) -> np.ndarray:
    """rho = (1 + h)^(2/(gamma-1))."""
    h = np.asarray(h, dtype=float)
    one_h = 1.0 + h
    if not np.all(one_h > 0):
        i = int(np.argmin(np.where(np.isnan(one_h), -np.inf, one_h)))
        raise ValidationError(f"1+h must be > 0, got {one_h.flat[i]:.3e} at node "
                              f"{_node(i, one_h.shape)}")
    return one_h ** (2.0 / (gamma - 1.0))


def pressure(rho, gamma: float) -> np.ndarray:
    return np.asarray(rho, dtype=float) ** gamma


def sound_speed(rho, gamma: float) -> np.ndarray:
    return np.sqrt(gamma * np.asarray(rho, dtype=float) ** (gamma - 1.0))


# -- implicit viscosity -----------------------------------------------------

@lru_cache(maxsize=16)
def periodic_laplacian(grid: PhaseGrid) -> sp.csr_matrix:
    """Second-order periodic Laplacian on the spatial grid (row-major nodes)."""
    mats = []
    for i, (n, h) in enumerate(zip(grid.cells, grid.dx)):
        e = np.ones(n)
        D = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
        D[0, n - 1] = 1.0
        D[n - 1, 0] = 1.0
        D = D.tocsr() / (h * h)
        left = sp.identity(int(np.prod(grid.cells[:i], dtype=int)), format="csr")
        right = sp.identity(int(np.prod(grid.cells[i + 1:], dtype=int)), format="csr")
        mats.append(sp.kron(sp.kron(left, D), right, format="csr"))
    return sum(mats[1:], mats[0]).tocsr()


def solve_viscous(diag, rhs, mu_dt: float, grid: PhaseGrid, tol: float, x0=None):
    """Solve (diag - mu_dt Lap) x = rhs componentwise by CG."""
    A = sp.diags(np.asarray(diag).ravel()) - mu_dt * periodic_laplacian(grid)
    out = np.empty_like(rhs)
    for c in range(rhs.shape[0]):
        b = rhs[c].ravel()
        guess = None if x0 is None else x0[c].ravel()
        x, info = cg(A, b, x0=guess, rtol=tol, atol=0.0, maxiter=10 * b.size + 100)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
            raise ConvergenceError(f"CG did not converge for velocity component {c} "
                                   f"(relative residual {res:.2e}, tol {tol:.1e})")
        out[c] = x.reshape(grid.nx)
    return out


# -- linearised symmetric form ---------------------------------------------

@dataclass
class FluidStepInputs:
    """Unknowns (h, u) at step start plus the frozen coefficients.

    ``forcing`` is F in  u_t + ... = -F  (shape (d,)+nx) or a callable of t;
    ``h_source`` optionally adds a right-hand side to the h-equation (also a
    callable of t or an array), used by manufactured solutions.
    """

    h: np.ndarray
    u: np.ndarray
    h_coeff: np.ndarray
    u_coeff: np.ndarray
    forcing: np.ndarray | Callable | None
    gamma: float
    mu: float
    dt: float
    t: float = 0.0
    h_source: np.ndarray | Callable | None = None
    delta: float = 0.0


def _at(term, t, like):
    if term is None:
        return np.zeros_like(like)
    if callable(term):
        return np.asarray(term(t), dtype=float)
    return np.asarray(term, dtype=float)


def fluid_cfl_limit(u_coeff, h_coeff, gamma, mu, grid: PhaseGrid, implicit: bool) -> float:
    """Largest admissible dt before the safety factor."""
    dx = min(grid.dx)
    speed = float(np.max(np.sqrt(np.sum(u_coeff ** 2, axis=0)))) \
        + float(np.sqrt(gamma) * np.max(1.0 + h_coeff))
    lim = dx / speed if speed > 0 else np.inf
    if not implicit:
        rho_min = float(np.min(1.0 + h_coeff)) ** (2.0 / (gamma - 1.0))
        lim = min(lim, dx * dx * rho_min / (2 * grid.dim * mu))
    return lim


def _sym_rhs(h, u, hc, uc, gamma, grid, F, Sh):
    d = grid.dim
    dhdt = Sh.copy()
    div = np.zeros_like(h)
    for i in range(d):
        dhdt -= uc[i] * upwind2(h, uc[i], i, grid.dx[i])
        div += central2(u[i], i, grid.dx[i])
    dhdt -= 0.5 * (gamma - 1.0) * (1.0 + hc) * div
    dudt = -F.copy()
    c = 2.0 * gamma / (gamma - 1.0) * (1.0 + hc)
    for j in range(d):
        for i in range(d):
            dudt[j] -= uc[i] * upwind2(u[j], uc[i], i, grid.dx[i])
        dudt[j] -= c * central2(h, j, grid.dx[j])
    return dhdt, dudt


def fluid_step(inp: FluidStepInputs, grid: PhaseGrid, implicit_viscosity: bool = True,
               cfl: float = 0.9, cg_tol: float = 1e-12, check_cfl: bool = True):
    """One step of the linearised symmetric system; returns (h', u')."""
    g, dt = inp.gamma, inp.dt
    h = np.asarray(inp.h, dtype=float)
    u = np.asarray(inp.u, dtype=float)
    hc = np.asarray(inp.h_coeff, dtype=float)
    uc = np.asarray(inp.u_coeff, dtype=float)
    floor = 1.0 + hc
    if inp.delta > 0 and np.any(floor < 0.5 * inp.delta):
        i = int(np.argmin(floor))
        raise PositivityError(f"coefficient 1+h = {floor.flat[i]:.3e} below delta/2 at node "
                              f"{_node(i, floor.shape)}")
    if check_cfl:
        lim = cfl * fluid_cfl_limit(uc, hc, g, inp.mu, grid, implicit_viscosity)
        if dt > lim * (1 + 1e-12):
            raise CFLError(f"fluid CFL violated: dt = {dt:.3e} > {lim:.3e}")
    F0 = _at(inp.forcing, inp.t, u)
    F1 = _at(inp.forcing, inp.t + dt, u)
    S0 = _at(inp.h_source, inp.t, h)
    S1 = _at(inp.h_source, inp.t + dt, h)
    k1h, k1u = _sym_rhs(h, u, hc, uc, g, grid, F0, S0)
    k2h, k2u = _sym_rhs(h + dt * k1h, u + dt * k1u, hc, uc, g, grid, F1, S1)
    h_new = h + 0.5 * dt * (k1h + k2h)
    u_hyp = u + 0.5 * dt * (k1u + k2u)
    rho_c = (1.0 + hc) ** (2.0 / (g - 1.0))
    if implicit_viscosity:
        u_new = solve_viscous(rho_c, rho_c * u_hyp, inp.mu * dt, grid, cg_tol, x0=u_hyp)
    else:
        L = periodic_laplacian(grid)
        u_new = u_hyp + dt * inp.mu * np.stack(
            [(L @ u[c].ravel()).reshape(grid.nx) for c in range(grid.dim)]) / rho_c
    _check_positive(1.0 + h_new, "1+h")
    return h_new, u_new


def _check_positive(a, label):
    if not np.all(a > 0):
        i = int(np.argmin(np.where(np.isnan(a), -np.inf, a)))
        raise PositivityError(f"{label} = {a.flat[i]:.3e} <= 0 at node {_node(i, a.shape)}")


# -- conservative form ------------------------------------------------------

def _face_upwind(q, vel_face, axis):
    # linear upwind value of q at face i+1/2
    left = 1.5 * q - 0.5 * _shift(q, -1, axis)
    right = 1.5 * _shift(q, 1, axis) - 0.5 * _shift(q, 2, axis)
    return np.where(vel_face >= 0.0, left, right)


def _cons_rhs(rho, m, gamma, grid, S):
    d = grid.dim
    u = m / rho
    p = pressure(rho, gamma)
    drho = np.zeros_like(rho)
    dm = np.array(S, dtype=float, copy=True)
    for i in range(d):
        uf = 0.5 * (u[i] + _shift(u[i], 1, i))
        flux = uf * _face_upwind(rho, uf, i)
        drho -= (flux - _shift(flux, -1, i)) / grid.dx[i]
        for j in range(d):
            fm = uf * _face_upwind(m[j], uf, i)
            dm[j] -= (fm - _shift(fm, -1, i)) / grid.dx[i]
        dm[i] -= central2(p, i, grid.dx[i])
    return drho, dm


def fluid_step_conservative(rho, u, source, gamma: float, mu: float, dt: float,
                            grid: PhaseGrid, cfl: float = 0.9, cg_tol: float = 1e-12,
                            check_cfl: bool = True):
    """One step of rho_t + div(rho u) = 0, (rho u)_t + div(rho u u) + grad p = mu Lap u + S.

    ``source`` is the momentum source density S (shape (d,)+nx), held fixed
    over the step.  Returns (rho', u').
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    S = np.zeros_like(u) if source is None else np.asarray(source, dtype=float)
    _check_positive(rho, "rho")
    if check_cfl:
        speed = float(np.max(np.sqrt(np.sum(u ** 2, axis=0)) + sound_speed(rho, gamma)))
        lim = cfl * min(grid.dx) / speed
        if dt > lim * (1 + 1e-12):
            raise CFLError(f"fluid CFL violated: dt = {dt:.3e} > {lim:.3e}")
    m = rho * u
    k1r, k1m = _cons_rhs(rho, m, gamma, grid, S)
    r1 = rho + dt * k1r
    _check_positive(r1, "rho (predictor)")
    k2r, k2m = _cons_rhs(r1, m + dt * k1m, gamma, grid, S)
    rho_new = rho + 0.5 * dt * (k1r + k2r)
    m_new = m + 0.5 * dt * (k1m + k2m)
    _check_positive(rho_new, "rho")
    u_new = solve_viscous(rho_new, m_new, mu * dt, grid, cg_tol, x0=m_new / rho_new)
    return rho_new, u_new


__all__ = [
    "to_symmetrized", "from_symmetrized", "pressure", "sound_speed", "FluidStepInputs",
    "fluid_step", "fluid_step_conservative", "fluid_cfl_limit", "periodic_laplacian",
    "solve_viscous",
]
