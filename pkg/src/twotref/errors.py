"""Exception hierarchy shared by every module.

The CLI maps each family onto its own exit code, so raise the most specific
class that applies.
"""


class TwoTError(Exception):
    """Base class for all package errors."""


class DomainError(TwoTError, ValueError):
    """An argument lies outside the domain of a model equation."""


class NumericError(TwoTError, ArithmeticError):
    """A numerical procedure failed to converge or produced a non-finite value."""


class ConfigurationError(TwoTError):
    """A tech deck, design file or option set is missing data or malformed."""


class SchemaError(ConfigurationError):
    """A file does not follow its versioned schema.

    ``location`` is a dotted field path (``transistors.lvt_pmos.n``) or a
    ``line N`` marker for parse errors.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class SizingError(TwoTError):
    """A sizing procedure asked for a geometry the technology cannot realise."""


class MetricError(TwoTError, ValueError):
    """A box metric was requested on a series without enough valid points."""
