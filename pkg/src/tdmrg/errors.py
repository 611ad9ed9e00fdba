"""Exception hierarchy shared by the package."""


class TdmrgError(Exception):
    """Base class for all package errors."""


class DimensionError(TdmrgError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(TdmrgError, ArithmeticError):
    """An iterative or dense eigensolver failed to converge."""

    def __init__(self, message: str, best_residual: float | None = None):
        super().__init__(message)
        self.best_residual = best_residual


class SizeError(TdmrgError, ValueError):
    """A dense representation would exceed the configured cap."""


class DegeneracyError(TdmrgError):
    """A ground state required to be unique is (near-)degenerate."""

    def __init__(self, message: str, phi: float | None = None):
        super().__init__(message)
        self.phi = phi


class UnsupportedModelError(TdmrgError, ValueError):
    """The requested model cannot be handled by this solver."""


class ConfigError(TdmrgError, ValueError):
    """Invalid scan configuration."""
