"""Exception types shared across the engine.

Usage errors (bad dimensions, malformed parameters) raise plain ValueError.
The classes below mark *computation* diagnostics: a calculation that started
from valid inputs but cannot produce a trustworthy number.
"""


class EngineError(RuntimeError):
    """Base class for computation diagnostics."""


class NanPointError(EngineError):
    """An integrand or representing function was undefined at a named point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ConvergenceError(EngineError):
    """A quadrature, contour, or optimizer loop failed to converge."""
