"""Exception hierarchy shared by all pipeline stages."""


class ConvexifyError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(ConvexifyError):
    """Shape/grid mismatch or an operation on an undersized grid."""


class DomainError(ConvexifyError):
    """A scalar argument outside its mathematical domain."""


class ContractError(ConvexifyError):
    """A field violates the boundary conditions required by an operation."""


class SolverError(ConvexifyError):
    """An iterative solver failed to reach its tolerance.

    Carries the final residual (and optionally the residual history) so the
    caller can report how far the solve got.
    """

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history


class UnwrapError(ConvexifyError):
    """Phase unwrapping failed: degenerate amplitude or a post-unwrap jump.

    ``sample`` identifies the offending (k-index, j, s) sample.
    """

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class ScheduleError(ConvexifyError):
    """A noise level outside the admissible range of a parameter schedule."""


class ConstructionError(ConvexifyError):
    """An extension field failed its boundary-matching invariants."""

    def __init__(self, message, face=None, defect=None):
        super().__init__(message)
        self.face = face
        self.defect = defect


class DivergenceError(ConvexifyError):
    """The projected-gradient iteration kept ascending after all step cuts.

    ``history`` holds the per-iteration record accumulated so far.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class ConfigError(ConvexifyError):
    """Malformed run configuration (unknown key, bad value, missing section)."""
