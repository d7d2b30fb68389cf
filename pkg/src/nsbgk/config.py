"""Run configuration.

Every field has a default; :func:`nsbgk.io.parse_config` only overrides what
the file names and rejects anything it does not recognise.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .errors import ConfigError

FLUID_FORMS = ("conservative", "symmetrized")
INIT_KINDS = ("equilibrium", "perturbed", "random", "fluid_only")
QUADRATURES = ("midpoint", "trapezoid")


@dataclass(frozen=True)
class SimConfig:
    # physics
    gamma: float = 1.4
    mu: float = 0.1
    alpha: float = 1.0
    k: float = 1.5
    eps: float = 0.5
    delta: float = 0.5

    # time marching
    dt: float = 1e-3
    t_final: float = 1.0
    cfl: float = 0.9
    snapshot_every: int = 0

    # moments / monitors
    T_ref: float = 1.0
    moment_floor: float = 1e-12
    truncation_tol: float = 1e-10
    eps1: float | None = None
    a: float | None = None
    monitor_M: float = math.inf

    # Picard iteration
    picard_max_iters: int = 8
    picard_tol: float = 1e-8
    dissipation_coeff: float = 1.0
    picard_memory_cap_mb: float = 512.0

    # grid (same extent and resolution on every axis)
    dim: int = 1
    length: float = 1.0
    cells: int = 64
    v_max: float | None = None
    v_cells: int = 64
    quadrature: str = "midpoint"

    # numerics
    fluid_form: str = "conservative"
    implicit_viscosity: bool = True
    cg_tol: float = 1e-12
    conservative_fixup: bool = True
    clamp_upper: bool = False

    # initial data
    init: str = "equilibrium"
    init_rho: float = 1.0
    init_u: float = 0.0
    init_rho_f: float = 1.0
    init_u_f: float = 0.0
    init_T_f: float = 1.0
    init_amplitude: float = 0.0
    init_modes: int = 3
    seed: int = 0

    def __post_init__(self):
        _check(self.gamma > 1, "gamma must be > 1 (isentropic pressure law)")
        _check(self.mu > 0, "mu must be > 0")
        _check(0 <= self.alpha <= 1, "alpha must lie in the closed interval [0,1]")
        _check(1 < self.k < 2, "k must lie in the open interval (1,2)")
        _check(0 < self.eps < self.k, f"eps must lie in the open interval (0,k) = (0,{self.k})")
        _check(self.delta > 0, "delta must be > 0")
        _check(self.dt > 0, "dt must be > 0")
        _check(self.t_final >= 0, "t_final must be >= 0")
        _check(0 < self.cfl <= 1, "cfl must lie in the half-open interval (0,1]")
        _check(self.snapshot_every >= 0, "snapshot_every must be >= 0")
        _check(self.T_ref > 0, "T_ref must be > 0")
        _check(self.moment_floor > 0, "moment_floor must be > 0")
        _check(self.truncation_tol > 0, "truncation_tol must be > 0")
        _check((self.eps1 is None) == (self.a is None),
               "eps1 and a must be given together (lower-bound threshold)")
        if self.eps1 is not None:
            _check(self.eps1 > 0, "eps1 must be > 0")
            _check(self.a > 0, "a must be > 0")
        _check(self.monitor_M > 0, "monitor_M must be > 0")
        _check(self.picard_max_iters >= 1, "picard_max_iters must be >= 1")
        _check(self.picard_tol > 0, "picard_tol must be > 0")
        _check(self.dissipation_coeff >= 0, "dissipation_coeff must be >= 0")
        _check(self.picard_memory_cap_mb > 0, "picard_memory_cap_mb must be > 0")
        _check(self.dim in (1, 2, 3), "dim must be 1, 2 or 3")
        _check(self.length > 0, "length must be > 0")
        _check(self.cells >= 4, "cells must be >= 4")
        _check(self.v_max is None or self.v_max > 0, "v_max must be > 0")
        _check(self.v_cells >= 8, "v_cells must be >= 8")
        _check(self.v_cells % 2 == 0, "v_cells must be even (velocity grid must be symmetric)")
        _check(self.quadrature in QUADRATURES, f"quadrature must be one of {QUADRATURES}")
        _check(self.fluid_form in FLUID_FORMS, f"fluid_form must be one of {FLUID_FORMS}")
        _check(self.cg_tol > 0, "cg_tol must be > 0")
        _check(self.init in INIT_KINDS, f"init must be one of {INIT_KINDS}")
        _check(self.init_rho > 0, "init_rho must be > 0")
        _check(self.init_rho_f >= 0, "init_rho_f must be >= 0")
        _check(self.init_T_f > 0, "init_T_f must be > 0")
        _check(self.init_amplitude >= 0, "init_amplitude must be >= 0")
        _check(self.init_modes >= 1, "init_modes must be >= 1")

    @property
    def resolved_v_max(self) -> float:
        """Velocity cutoff; defaults to 8 max(1, sqrt(T_f), |u_f|, |u|) of the initial data."""
        if self.v_max is not None:
            return float(self.v_max)
        return 8.0 * max(1.0, math.sqrt(self.init_T_f), abs(self.init_u_f), abs(self.init_u))

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _check(cond, message):
    if not cond:
        raise ConfigError(message)


def config_fields() -> dict[str, dataclasses.Field]:
    return {f.name: f for f in dataclasses.fields(SimConfig)}


__all__ = ["SimConfig", "config_fields", "FLUID_FORMS", "INIT_KINDS", "QUADRATURES"]
