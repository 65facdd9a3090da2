"""Exception types shared across the package.

The CLI maps each class to a distinct exit code; library code raises them
directly so callers can distinguish bad configuration from bad data.
"""


class ChiVesselError(Exception):
    """Base class for all package errors."""


class ConfigError(ChiVesselError):
    """Invalid or unparsable configuration / scene specification."""

    exit_code = 2


class InputError(ChiVesselError):
    """Missing, unreadable, or malformed input file."""

    exit_code = 3


class GeometryError(ChiVesselError):
    """Volumes/masks that must share a grid do not."""

    exit_code = 4


class OutputError(ChiVesselError):
    """Output location is unwritable or a write failed."""

    exit_code = 5
