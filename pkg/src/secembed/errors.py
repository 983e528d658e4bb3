"""Exception taxonomy shared by all modules.

The CLI maps these onto stable exit codes, so scripts can branch on the
failure class without parsing messages.
"""


class WorkbenchError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(WorkbenchError, ValueError):
    """Inputs violate a documented contract (shapes, normalization, ranges)."""


class NumericalConsistencyError(WorkbenchError, ArithmeticError):
    """A quantity that must be nonnegative (or otherwise sane) came out wrong
    by more than the accepted floating-point tolerance."""


class InfeasibleError(WorkbenchError, RuntimeError):
    """The requested point/blocklength/rate combination cannot be realized."""


class ResourceCapError(WorkbenchError, RuntimeError):
    """An enumeration or materialization would exceed the configured cap."""


class ConvergenceError(WorkbenchError, RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class EmptyTypicalSetError(InfeasibleError):
    """A (conditional) typical set required by a construction is empty at the
    requested blocklength and tolerance."""
