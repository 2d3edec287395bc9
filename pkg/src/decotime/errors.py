"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class DecotimeError(Exception):
    """Base class for all package errors."""


class DomainError(DecotimeError, ValueError):
    """Argument outside the domain where an object is defined."""


class ValidationError(DecotimeError, ValueError):
    """A record violates one of its invariants."""


class ConvergenceError(DecotimeError):
    """A numerical procedure did not reach its tolerance.

    The best available estimate and its error bar are kept so callers can
    decide whether to use the value anyway.
    """

    def __init__(self, message: str, value=None, error: float | None = None):
        super().__init__(message)
        self.value = value
        self.error = error


class BoundaryError(DecotimeError):
    """A contour passes too close to a zero or singularity."""


class PoleSearchError(DecotimeError):
    """Pole search could not resolve every region of a rectangle."""

    def __init__(self, message: str, poles=(), unresolved=()):
        super().__init__(message)
        self.poles = list(poles)
        self.unresolved = list(unresolved)


class ApproximationError(DecotimeError):
    """Rational approximation stagnated above its target residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class FitInputError(DecotimeError, ValueError):
    """Data handed to the decay fit cannot be fitted."""


class ModelError(DecotimeError):
    """A physical model produced an inconsistent or empty result."""


class InternalConsistencyError(DecotimeError):
    """Two independent routes to the same quantity disagree."""


class ScenarioError(DecotimeError, ValueError):
    """Scenario file could not be parsed or validated."""
