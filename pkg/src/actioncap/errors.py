"""Exception types shared across the package."""


class ActionCapError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ActionCapError):
    """Invalid configuration or a violated shape/dimension contract."""


class DataError(ActionCapError):
    """Missing, malformed or mutually inconsistent data."""


class NumericError(ActionCapError):
    """Numerical failure, e.g. NaN/Inf showing up during training."""
