"""Exception types shared across the package."""


class CBVEError(Exception):
    """Base class for package-specific errors."""


class ConfigError(CBVEError, ValueError):
    """A run configuration could not be parsed or failed validation."""


class AdmissibilityError(CBVEError, ValueError):
    """Model parameters violate an admissibility condition."""


class NumericalError(CBVEError, RuntimeError):
    """A numerical routine produced unusable output (overflow, NaN)."""


class DiscretizationError(NumericalError):
    """Results indicate the time grid is too coarse for the requested solve."""


class ConvergenceError(NumericalError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
