"""Phase-space grid, state containers and structural validation.

Arrays follow one layout everywhere: a kinetic density has shape
``grid.nx + grid.nv`` (spatial axes first, then velocity axes), a scalar
fluid field has shape ``grid.nx`` and a vector field ``(dim,) + grid.nx``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import GridError, ShapeError

QUADRATURE_RULES = ("midpoint", "trapezoid")


def _per_axis(value, dim, name, cast):
    if np.ndim(value) == 0:
        return (cast(value),) * dim
    value = tuple(cast(v) for v in value)
    if len(value) != dim:
        raise GridError(f"{name} needs {dim} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class PhaseGrid:
    """Periodic spatial box times a truncated, symmetric velocity box."""

    dim: int
    lengths: tuple[float, ...]
    cells: tuple[int, ...]
    v_max: tuple[float, ...]
    v_cells: tuple[int, ...]
    quadrature: str = "midpoint"

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.quadrature not in QUADRATURE_RULES:
            raise GridError(f"quadrature must be one of {QUADRATURE_RULES}, got {self.quadrature!r}")
        for i in range(self.dim):
            if not self.lengths[i] > 0:
                raise GridError(f"spatial period on axis {i} must be > 0, got {self.lengths[i]}")
            if self.cells[i] < 4:
                raise GridError(f"spatial cells on axis {i} must be >= 4, got {self.cells[i]}")
            if not self.v_max[i] > 0:
                raise GridError(f"V_max on axis {i} must be > 0, got {self.v_max[i]}")
            if self.v_cells[i] % 2:
                raise GridError(
                    f"velocity grid must be symmetric: axis {i} has an odd number "
                    f"of velocity cells ({self.v_cells[i]})")
            if self.v_cells[i] < 8:
                raise GridError(f"velocity cells on axis {i} must be >= 8, got {self.v_cells[i]}")

    # -- spacings and node coordinates ------------------------------------
    @cached_property
    def dx(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @cached_property
    def dv(self) -> tuple[float, ...]:
        return tuple(2.0 * V / n for V, n in zip(self.v_max, self.v_cells))

    @cached_property
    def x_nodes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.arange(n) * h for n, h in zip(self.cells, self.dx))

    @cached_property
    def v_nodes(self) -> tuple[np.ndarray, ...]:
        nodes = []
        for V, n, h in zip(self.v_max, self.v_cells, self.dv):
            if self.quadrature == "midpoint":
                j = np.arange(n) - (n - 1) / 2.0
            else:
                j = np.arange(n + 1) - n / 2.0
            nodes.append(j * h)
        return tuple(nodes)

    @cached_property
    def v_weights_1d(self) -> tuple[np.ndarray, ...]:
        out = []
        for nodes, h in zip(self.v_nodes, self.dv):
            w = np.full(nodes.size, h)
            if self.quadrature == "trapezoid":
                w[0] = w[-1] = 0.5 * h
            out.append(w)
        return tuple(out)

    @property
    def nx(self) -> tuple[int, ...]:
        return tuple(self.cells)

    @property
    def nv(self) -> tuple[int, ...]:
        return tuple(n.size for n in self.v_nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nx + self.nv

    @property
    def x_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim))

    @property
    def v_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim, 2 * self.dim))

    @cached_property
    def dx_vol(self) -> float:
        return float(np.prod(self.dx))

    @cached_property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def v_weights(self) -> np.ndarray:
        """Tensor-product velocity quadrature weights, shape ``nv``."""
        w = self.v_weights_1d[0]
        for wi in self.v_weights_1d[1:]:
            w = np.multiply.outer(w, wi)
        return w

    @cached_property
    def v_mesh(self) -> np.ndarray:
        """Velocity components at every velocity node, shape ``(dim,) + nv``."""
        return np.stack(np.meshgrid(*self.v_nodes, indexing="ij"))

    @cached_property
    def x_mesh(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.x_nodes, indexing="ij"))

    @cached_property
    def speed2(self) -> np.ndarray:
        return np.sum(self.v_mesh ** 2, axis=0)

    def v_component(self, i: int) -> np.ndarray:
        """Velocity component ``i`` broadcastable against a phase-space array."""
        return self.v_mesh[i].reshape((1,) * self.dim + self.nv)

    def weight(self, k: float) -> np.ndarray:
        """exp(<v>^k) at every velocity node."""
        return np.exp((1.0 + self.speed2) ** (0.5 * k))

    def spec(self) -> dict:
        return {
            "dim": self.dim,
            "lengths": list(self.lengths),
            "cells": list(self.cells),
            "v_max": list(self.v_max),
            "v_cells": list(self.v_cells),
            "quadrature": self.quadrature,
        }


def build_phase_grid(dim: int = 1, length=1.0, cells=64, v_max=8.0, v_cells=64,
                     quadrature: str = "midpoint") -> PhaseGrid:
    """Build a grid; scalar extents/resolutions are repeated on every axis."""
    if dim not in (1, 2, 3):
        raise GridError(f"dim must be 1, 2 or 3, got {dim}")
    return PhaseGrid(
        dim=int(dim),
        lengths=_per_axis(length, dim, "length", float),
        cells=_per_axis(cells, dim, "cells", int),
        v_max=_per_axis(v_max, dim, "v_max", float),
        v_cells=_per_axis(v_cells, dim, "v_cells", int),
        quadrature=quadrature,
    )


def grid_from_config(cfg) -> PhaseGrid:
    return build_phase_grid(cfg.dim, cfg.length, cfg.cells, cfg.resolved_v_max,
                            cfg.v_cells, cfg.quadrature)


def grid_from_spec(spec: dict) -> PhaseGrid:
    return build_phase_grid(spec["dim"], spec["lengths"], spec["cells"], spec["v_max"],
                            spec["v_cells"], spec.get("quadrature", "midpoint"))


def bracket(v) -> np.ndarray:
    """<v> = (1 + |v|^2)^(1/2); the last axis of ``v`` holds the components."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return np.sqrt(1.0 + v * v)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))


def weight_value(v, k: float):
    """exp(<v>^k), the exponential velocity weight.

    ``v`` is a single velocity (scalar in 1D, or a vector) or an array whose
    last axis holds the components.
    """
    return np.exp(bracket(v) ** k)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class KineticState:
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


@dataclass(frozen=True)
class FluidState:
    """Fluid density, its symmetrized form 1+h = rho^((gamma-1)/2), and velocity."""

    rho: np.ndarray
    h: np.ndarray
    u: np.ndarray
    gamma: float
    t: float = 0.0

    def __post_init__(self):
        for name in ("rho", "h", "u"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @classmethod
    def from_rho(cls, rho, u, gamma, t=0.0):
        rho = np.asarray(rho, dtype=float)
        return cls(rho=rho, h=rho ** (0.5 * (gamma - 1.0)) - 1.0, u=u, gamma=gamma, t=t)

    @classmethod
    def from_h(cls, h, u, gamma, t=0.0):
        h = np.asarray(h, dtype=float)
        return cls(rho=(1.0 + h) ** (2.0 / (gamma - 1.0)), h=h, u=u, gamma=gamma, t=t)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float | None = None
    index: tuple | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            mark = "ok  " if c.passed else "FAIL"
            where = f" at {c.index}" if c.index is not None else ""
            lines.append(f"[{mark}] {c.name}: {c.detail}{where}")
        return "\n".join(lines)


def _argmin(a):
    idx = np.unravel_index(int(np.argmin(a)), a.shape)
    return tuple(int(i) for i in idx), float(a[idx])


def validate_state(f: KineticState, fl: FluidState, grid: PhaseGrid, cfg,
                   eps1: float | None = None, a: float | None = None) -> ValidationReport:
    """Check every structural invariant of a (kinetic, fluid) pair.

    Shape mismatches raise :class:`ShapeError`; everything else becomes a
    report entry with the offending extremum and its index.
    """
    fv = f.values
    if fv.shape != grid.shape:
        raise ShapeError(f"kinetic array has shape {fv.shape}, grid expects {grid.shape}")
    if fl.rho.shape != grid.nx or fl.h.shape != grid.nx:
        raise ShapeError(f"fluid density has shape {fl.rho.shape}, grid expects {grid.nx}")
    if fl.u.shape != (grid.dim,) + grid.nx:
        raise ShapeError(f"fluid velocity has shape {fl.u.shape}, expected {(grid.dim,) + grid.nx}")

    eps1 = cfg.eps1 if eps1 is None else eps1
    a = cfg.a if a is None else a
    report = ValidationReport()
    add = report.checks.append

    finite = np.isfinite(fv)
    if finite.all():
        add(CheckResult("f_finite", True, detail="all kinetic values finite"))
    else:
        idx = tuple(int(i) for i in np.argwhere(~finite)[0])
        add(CheckResult("f_finite", False, float(fv[idx]), idx, "non-finite kinetic value"))

    safe = np.where(finite, fv, 0.0)
    idx, fmin = _argmin(safe)
    add(CheckResult("f_nonnegative", fmin >= 0.0, fmin, None if fmin >= 0 else idx,
                    f"min f = {fmin:.3e}"))

    total = float(np.sum(safe * grid.v_weights) * grid.dx_vol)
    edge = np.zeros(grid.nv, dtype=bool)
    for ax in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    edge_mass = float(np.sum(np.abs(safe) * (grid.v_weights * edge)) * grid.dx_vol)
    frac = edge_mass / total if total > 0 else 0.0
    add(CheckResult("velocity_truncation", frac <= cfg.truncation_tol, frac,
                    detail=f"mass fraction in the outermost velocity layer = {frac:.3e} "
                           f"(limit {cfg.truncation_tol:.1e})"))

    idx, rmin = _argmin(fl.rho)
    add(CheckResult("rho_positive", rmin > 0, rmin, None if rmin > 0 else idx,
                    f"min rho = {rmin:.6e}"))

    one_h = 1.0 + fl.h
    with np.errstate(invalid="ignore"):
        mismatch = np.abs(one_h - np.abs(fl.rho) ** (0.5 * (fl.gamma - 1.0)))
    bad = mismatch > 1e-12 * np.abs(one_h)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        add(CheckResult("h_rho_consistent", False, float(mismatch[idx]), idx,
                        "1+h differs from rho^((gamma-1)/2)"))
    else:
        add(CheckResult("h_rho_consistent", True, float(mismatch.max(initial=0.0)),
                        detail="1+h matches rho^((gamma-1)/2)"))

    with np.errstate(invalid="ignore"):
        sym = np.abs(fl.rho) ** (0.5 * (fl.gamma - 1.0))
    idx, smin = _argmin(sym)
    add(CheckResult("density_floor", smin > cfg.delta, smin, None if smin > cfg.delta else idx,
                    f"inf rho^((gamma-1)/2) = {smin:.6e} vs delta = {cfg.delta}"))

    if eps1 is not None:
        floor = eps1 * np.exp(-(1.0 + a) * (1.0 + grid.speed2) ** (0.5 * cfg.k))
        gap = safe - floor.reshape((1,) * grid.dim + grid.nv)
        idx, gmin = _argmin(gap)
        add(CheckResult("f_lower_bound", gmin >= 0, gmin, None if gmin >= 0 else idx,
                        f"min(f - eps1 exp(-(1+a)<v>^k)) = {gmin:.3e}"))
    return report


def check_shapes(grid: PhaseGrid, f=None, rho=None, u=None):
    if f is not None and np.shape(f) != grid.shape:
        raise ShapeError(f"kinetic array has shape {np.shape(f)}, grid expects {grid.shape}")
    if rho is not None and np.shape(rho) != grid.nx:
        raise ShapeError(f"scalar field has shape {np.shape(rho)}, grid expects {grid.nx}")
    if u is not None and np.shape(u) != (grid.dim,) + grid.nx:
        raise ShapeError(f"vector field has shape {np.shape(u)}, expected {(grid.dim,) + grid.nx}")


__all__: Sequence[str] = [
    "PhaseGrid", "build_phase_grid", "grid_from_config", "grid_from_spec", "bracket",
    "weight_value", "KineticState", "FluidState", "CheckResult", "ValidationReport",
    "validate_state", "check_shapes",
]
