"""Exception types shared across the package."""


class RevcastError(Exception):
    """Base class for all package errors."""


class ParameterError(RevcastError, ValueError):
    """A parameter is outside its legal domain."""


class DimensionError(RevcastError, ValueError):
    """Vector or matrix dimensions do not line up."""


class ResolutionError(RevcastError, KeyError):
    """A named covariate could not be resolved from the supplied table."""


class DataError(RevcastError, ValueError):
    """Input data violates a documented invariant."""


class ConfigError(RevcastError, ValueError):
    """A configuration value is missing, malformed, or inconsistent."""
