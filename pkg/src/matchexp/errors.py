"""Exception types shared across the package."""


class MatchexpError(Exception):
    """Base class for all package errors."""


class ConfigError(MatchexpError):
    """Invalid run configuration or parameters (CLI exit code 2)."""


class DataError(MatchexpError):
    """Invalid or inconsistent input data (CLI exit code 3)."""


class SchemaError(DataError):
    """Input file does not match the declared schema."""


class GridError(ConfigError):
    """Hypothesis grid cannot support the requested inversion."""
