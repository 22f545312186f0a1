class ConfigurationError(ValueError):
    """Raised for invalid parameters, shapes or configuration documents."""


class DetectorUnavailable(RuntimeError):
    """Raised when a detector cannot be applied (e.g. singular correlation matrix)."""


class NonFiniteFitness(FloatingPointError):
    """Raised when the detection objective evaluates to NaN or infinity."""
