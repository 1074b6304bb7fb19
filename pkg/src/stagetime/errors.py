"""Exception types shared across the package."""


class StagetimeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(StagetimeError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(StagetimeError, ValueError):
    """An operation received or produced non-finite values."""


class ConfigError(StagetimeError, ValueError):
    """A configuration value is out of its legal range."""


class DataError(StagetimeError, ValueError):
    """A dataset or label violates its contract."""


class UsageError(StagetimeError, ValueError):
    """An API was called in an unsupported way."""


class ParseError(StagetimeError, ValueError):
    """A text input could not be parsed.  Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
