"""Exception taxonomy for the simulation engine and experiment runner."""


class DecoupleSimError(Exception):
    """Base class for every error raised by this package."""


class DomainError(DecoupleSimError, ValueError):
    """An argument lies outside the mathematical domain of an operation
    (negative frequency, non-unit rotation axis, ...)."""


class RangeError(DecoupleSimError, ValueError):
    """A time argument lies outside the gate window [0, tau]."""


class PathConsistencyError(DecoupleSimError):
    """A supposed unitary path produced a generator i*dU/dt*U^dag that is not
    traceless Hermitian within tolerance."""


class ConvergenceError(DecoupleSimError):
    """An iterative evaluation failed to reach its tolerance.

    Carries the tolerance that was requested and the bound actually achieved.
    """

    def __init__(self, message: str, requested: float | None = None,
                 achieved: float | None = None):
        super().__init__(message)
        self.requested = requested
        self.achieved = achieved


class ConfigurationError(DecoupleSimError, ValueError):
    """An invalid combination of otherwise well-formed inputs (for example two
    reservoirs of the same error class)."""


class ScenarioError(DecoupleSimError, ValueError):
    """A scenario file failed to parse or validate.  Messages name the
    offending line number or key."""


class FormatError(DecoupleSimError, ValueError):
    """A CSV handed to the plotter is malformed or empty."""


class UsageError(DecoupleSimError, ValueError):
    """An API precondition was violated (for example asking a precomputed
    table for a time that is not one of its nodes)."""


class IntegrationError(DecoupleSimError):
    """A propagated trajectory broke a structural invariant (trace or
    Hermiticity drift beyond tolerance)."""
