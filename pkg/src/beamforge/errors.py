"""Exception hierarchy shared by the solver, reconstruction and CLI layers."""


class BeamforgeError(Exception):
    """Base class for all package errors."""


class ValidationError(BeamforgeError):
    """Problem data violates the admissibility conditions or the config schema."""


class SolverError(BeamforgeError):
    """A linear solve or time march failed."""


class FactorizationError(SolverError):
    """A stepping matrix is not symmetric positive definite."""


class InstabilityError(SolverError):
    """The time march produced non-finite values."""


class StagnationError(SolverError):
    """A search direction lies in the numerical null space of the forward map."""


class GridMismatchError(ValidationError):
    """Two time series live on different grids."""
