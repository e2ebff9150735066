"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument or configuration value lies outside its allowed domain."""


class TruncationError(RuntimeError):
    """A photon-number series cannot reach the requested tail bound within its cap."""
