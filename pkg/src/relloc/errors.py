"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration or out-of-domain parameter."""


class CutoffOverflowError(RuntimeError):
    """Fock cutoff too small for the requested ensemble tail."""


class NumericalValidationError(RuntimeError):
    """An internal cross-check between two computation routes failed."""


class NoPeakError(ValueError):
    """A record with no detections has no localization peak."""


class UndefinedVisibilityError(ValueError):
    """Visibility requested for an identically zero intensity curve."""
