"""Trace-distance detection of quantum phase transitions with DMRG."""

from .errors import (
    ConfigError,
    DegeneracyError,
    DimensionError,
    NumericError,
    SizeError,
    UnsupportedModelError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegeneracyError",
    "DimensionError",
    "NumericError",
    "SizeError",
    "UnsupportedModelError",
]
