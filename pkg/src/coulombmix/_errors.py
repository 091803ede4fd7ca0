"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented domain constraint."""


class UnsupportedMomentError(ValueError):
    """Raised when a closed-form moment is not available for an ensemble."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its budget."""


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configurations."""


class DataError(OSError):
    """Raised when a dataset cannot be read or parsed."""


class NumericCheckError(RuntimeError):
    """Raised when a numerical validation check misses its tolerance."""
