"""Macroscopic fields of the particle density and the drag-force density."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import PhaseGrid, check_shapes


@dataclass(frozen=True)
class MacroFields:
    """Particle density rho_f, bulk velocity u_f (shape (d,)+nx), temperature T_f.

    ``vacuum`` marks nodes where rho_f fell below the moment floor; there u_f
    and T_f hold the fallback (0, T_ref).
    """

    rho_f: np.ndarray
    u_f: np.ndarray
    T_f: np.ndarray
    vacuum: np.ndarray
    drag: np.ndarray | None = None


def velocity_sum(a: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Quadrature over the velocity axes: sum_v a(., v) w(v)."""
    prod = a * grid.v_weights
    return prod.reshape(grid.nx + (-1,)).sum(axis=-1)


def compute_moments(f, grid: PhaseGrid, T_ref: float = 1.0,
                    floor: float = 1e-12) -> MacroFields:
    f = getattr(f, "values", f)
    check_shapes(grid, f=f)
    d = grid.dim
    rho_f = velocity_sum(f, grid)
    flux = np.stack([velocity_sum(f * grid.v_component(i), grid) for i in range(d)])
    vacuum = rho_f < floor * (float(rho_f.max(initial=0.0)) + 1.0)
    safe = np.where(vacuum, 1.0, rho_f)
    u_f = np.where(vacuum, 0.0, flux / safe)
    c2 = np.zeros_like(f)
    for i in range(d):
        c = grid.v_component(i) - u_f[i].reshape(grid.nx + (1,) * d)
        c2 += c * c
    T_f = np.where(vacuum, T_ref, velocity_sum(f * c2, grid) / (d * safe))
    return MacroFields(rho_f=rho_f, u_f=u_f, T_f=T_f, vacuum=vacuum)


def coupling_force_density(f, u: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """F(x) = int (u(x) - v) f(x, v) dv, one vector per spatial node."""
    f = getattr(f, "values", f)
    check_shapes(grid, f=f, u=u)
    rho_f = velocity_sum(f, grid)
    return np.stack([u[i] * rho_f - velocity_sum(f * grid.v_component(i), grid)
                     for i in range(grid.dim)])


def with_drag(macro: MacroFields, f, u, grid: PhaseGrid) -> MacroFields:
    return MacroFields(macro.rho_f, macro.u_f, macro.T_f, macro.vacuum,
                       coupling_force_density(f, u, grid))


def l2_velocity(f, grid: PhaseGrid) -> np.ndarray:
    """(int f^2 dv)^(1/2) per spatial node."""
    f = getattr(f, "values", f)
    return np.sqrt(velocity_sum(f * f, grid))


_BALL_VOLUME = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


def rho_T_constant(d: int) -> float:
    """Constant C_d with rho_f <= C_d (int f^2)^(1/2) T_f^(d/4).

    Split int f dv at |v - u_f| = R: Chebyshev outside the ball,
    Cauchy-Schwarz inside (volume |B_1| R^d).  Choosing R so the two pieces
    are equal yields 2^((d+4)/4) d^(d/4) |B_1|^(1/2); for d = 3 this is
    2^(7/4) 3^(3/4) (4 pi / 3)^(1/2).
    """
    return 2.0 ** ((d + 4) / 4.0) * d ** (d / 4.0) * math.sqrt(_BALL_VOLUME[d])


@dataclass
class RhoTReport:
    max_margin: float
    passed: bool
    constant: float
    exponent: float
    margins: np.ndarray
    violations: list[tuple]


def check_rho_T_relation(f, grid: PhaseGrid, tol: float = 1e-6,
                         floor: float = 1e-12) -> RhoTReport:
    """Margin rho_f / (C_d g T_f^(d/4)) per node, g = (int f^2 dv)^(1/2).

    Passes iff every margin is <= 1 + tol.  A node with T_f = 0 but
    rho_f > 0 counts as a violation.
    """
    f = getattr(f, "values", f)
    check_shapes(grid, f=f)
    d = grid.dim
    C = rho_T_constant(d)
    rho_f = velocity_sum(f, grid)
    g = l2_velocity(f, grid)
    flux = np.stack([velocity_sum(f * grid.v_component(i), grid) for i in range(d)])
    positive = rho_f > floor * (float(rho_f.max(initial=0.0)) + 1.0)
    safe = np.where(positive, rho_f, 1.0)
    u_f = flux / safe
    c2 = np.zeros_like(f)
    for i in range(d):
        c = grid.v_component(i) - u_f[i].reshape(grid.nx + (1,) * d)
        c2 += c * c
    T_f = np.where(positive, velocity_sum(f * c2, grid) / (d * safe), 0.0)
    bound = C * g * np.maximum(T_f, 0.0) ** (d / 4.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        margins = np.where(positive, rho_f / bound, 0.0)
    margins = np.where(positive & (bound <= 0.0), np.inf, margins)
    bad = np.argwhere(margins > 1.0 + tol)
    violations = [tuple(int(i) for i in b) for b in bad]
    mmax = float(margins.max(initial=0.0))
    return RhoTReport(max_margin=mmax, passed=not violations, constant=C,
                      exponent=d / 4.0, margins=margins, violations=violations)
