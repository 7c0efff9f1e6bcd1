"""Exception types shared across the pipeline."""


class SnnKwsError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SnnKwsError):
    """A configuration or model-description value is invalid."""


class DataError(SnnKwsError):
    """An input file or dataset is missing or malformed."""
