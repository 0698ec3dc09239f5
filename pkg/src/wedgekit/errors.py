"""Exception types shared across the package."""


class WedgekitError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(WedgekitError, ValueError):
    """Matrix or vector dimensions are mutually inconsistent."""


class SingularPencil(WedgekitError):
    """The (G, F) pencil is degenerate: a generalized eigenvalue is 0/0."""


class Indeterminate(WedgekitError):
    """Too few unstable roots: multiple stable solutions exist."""


class Explosive(WedgekitError):
    """Too many unstable roots: no stable solution exists."""


class SingularRestriction(WedgekitError):
    """The Kronecker system of the transfer-matrix restriction is rank-deficient."""


class BadSteadyState(WedgekitError):
    """Steady-state solve failed (no bracket, no convergence, or inconsistent ratios)."""


class PlanMismatch(WedgekitError):
    """A measurement plan references an observable without a loading row."""


class ParseError(WedgekitError, ValueError):
    """Input file could not be parsed."""


class FrequencyViolation(WedgekitError, ValueError):
    """A low-frequency value appears in a quarter where it cannot be observed."""


class NonMonotoneDates(WedgekitError, ValueError):
    """Dataset dates are not strictly increasing."""


class NonPSDInnovation(WedgekitError):
    """An innovation covariance lost positive semi-definiteness beyond tolerance."""


class InitInvalid(WedgekitError):
    """Sampler initialisation has a non-finite posterior."""


class Unstable(WedgekitError):
    """Operation requires a stable law of motion (spectral radius < 1)."""


class NoConvergence(WedgekitError):
    """Iterative algorithm hit its iteration cap before meeting tolerance."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations
