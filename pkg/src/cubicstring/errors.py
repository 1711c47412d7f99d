"""Exception hierarchy shared by all modules.

The CLI maps these classes onto exit codes: usage problems exit with 1,
numeric failures with 2 and failed validations with 3.
"""


class CubicStringError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(CubicStringError, ValueError):
    """An argument is outside the documented domain of an operation."""


class NumericError(CubicStringError, RuntimeError):
    """A numerical procedure failed to produce a trustworthy result."""


class BracketingError(NumericError):
    """A root-finding bracket does not contain a sign change."""

    def __init__(self, message: str, interval: tuple[float, float] | None = None):
        super().__init__(message)
        self.interval = interval


class StiffnessError(NumericError):
    """The ODE integrator could not advance (step-size underflow)."""

    def __init__(self, message: str, location: float | None = None):
        super().__init__(message)
        self.location = location


class QuadratureError(NumericError):
    """Adaptive quadrature did not reach the requested tolerance."""


class ValidationError(CubicStringError):
    """Data failed a consistency or admissibility check."""
