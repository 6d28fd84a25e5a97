"""Exception hierarchy.

The CLI maps these onto exit codes: config problems exit 1, bad input data
exits 2, simulation failures exit 3.
"""


class GcsimError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GcsimError, ValueError):
    """Invalid or inconsistent configuration value."""


class InputDataError(GcsimError, ValueError):
    """Malformed or out-of-range input data."""


class ParseError(InputDataError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class BoundsError(InputDataError, IndexError):
    """An ID or offset lies outside the object it indexes."""


class CapacityError(GcsimError):
    """Device memory capacity exceeded (the OOM case)."""

    def __init__(self, message, required=None, capacity=None):
        super().__init__(message)
        self.required = required
        self.capacity = capacity


class SimulationError(GcsimError):
    """The simulator could not produce a schedule."""
