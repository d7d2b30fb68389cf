"""Navier-Stokes-BGK kinetic-fluid solver with its verification diagnostics."""
from .config import SimConfig
from .domain import FluidState, KineticState, PhaseGrid, build_phase_grid, validate_state
from .errors import NSBGKError, SimulationAbort, SolverError, ValidationError
from .stepper import (IterationTrace, SystemState, cauchy_functional, coupled_step,
                      initial_state, picard_solve, run_simulation)

__version__ = "0.1.0"

__all__ = [
    "SimConfig", "PhaseGrid", "build_phase_grid", "KineticState", "FluidState",
    "validate_state", "SystemState", "initial_state", "coupled_step", "run_simulation",
    "picard_solve", "cauchy_functional", "IterationTrace", "NSBGKError", "ValidationError",
    "SolverError", "SimulationAbort",
]
