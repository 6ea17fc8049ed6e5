"""Measurement-induced localization of relative phase and relative position."""
from .errors import (
    ConfigError,
    CutoffOverflowError,
    NoPeakError,
    NumericalValidationError,
    UndefinedVisibilityError,
)
from .numkernel import Grid1D

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CutoffOverflowError",
    "Grid1D",
    "NoPeakError",
    "NumericalValidationError",
    "UndefinedVisibilityError",
    "__version__",
]
