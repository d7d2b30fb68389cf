"""Exception hierarchy shared across the solver.

Validation problems (bad configuration, malformed files, shape mismatches)
derive from :class:`ValidationError` and map to CLI exit status 1.  Failures
that happen while marching in time derive from :class:`SolverError` and map
to exit status 2.
"""


class NSBGKError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(NSBGKError, ValueError):
    pass


class ConfigError(ValidationError):
    pass


class GridError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class SnapshotError(ValidationError):
    pass


class ChecksumError(SnapshotError):
    pass


class UnsupportedVersionError(SnapshotError):
    pass


class SolverError(NSBGKError, RuntimeError):
    pass


class CFLError(SolverError):
    pass


class PositivityError(SolverError):
    pass


class MaxwellianError(SolverError):
    pass


class BlowUpError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


class SimulationAbort(SolverError):
    """Raised when a runtime monitor trips; carries the dump location."""

    def __init__(self, message, dump_dir=None):
        super().__init__(message)
        self.dump_dir = dump_dir
