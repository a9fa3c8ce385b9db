"""Exception types shared across the package."""


class ClockDPError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ClockDPError):
    """Inconsistent or invalid problem / run configuration."""


class ParameterError(ClockDPError):
    """A numeric parameter is outside its admissible domain."""


class AdmissibilityError(ClockDPError):
    """An input fell outside the admissible set along a trajectory."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GridRangeError(ClockDPError):
    """A query point left the grid with clamping disabled."""


class ConvergenceError(ClockDPError):
    """Value iteration exhausted its iteration budget.

    Carries the last residual and the partial solution so callers can
    still inspect or report it.
    """

    def __init__(self, message, residual=None, iterations=None, solution=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.solution = solution


class NumericError(ClockDPError):
    """A numeric routine (bracketing, inversion) failed with diagnostics."""
