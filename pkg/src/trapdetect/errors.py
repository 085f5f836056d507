"""Exception types shared across the package."""


class TrapDetectError(Exception):
    """Base class for all errors raised by trapdetect."""


class ParameterError(TrapDetectError, ValueError):
    """An argument violates a documented precondition."""


class GeometryError(TrapDetectError, ValueError):
    """Array geometry and image frame are inconsistent."""


class ConfigError(TrapDetectError, ValueError):
    """Run configuration is malformed; carries the offending key."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class FactorizationError(TrapDetectError, RuntimeError):
    """Incomplete factorization hit a zero or negative pivot."""

    def __init__(self, row):
        super().__init__(f"zero or negative pivot at row {row}")
        self.row = row


class SolverError(TrapDetectError, RuntimeError):
    """Iterative solve did not reach the requested residual."""

    def __init__(self, residual, iterations):
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


class FitError(TrapDetectError, RuntimeError):
    """Mixture fit collapsed or could not be initialized."""


class ImageFormatError(TrapDetectError, ValueError):
    """Binary image file is malformed, truncated, or wrong version."""
