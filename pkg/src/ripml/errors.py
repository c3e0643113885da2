"""Exception types raised across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``NumericError`` -> 3.
"""


class RipmlError(Exception):
    """Base class for all package errors."""


class ConfigError(RipmlError, ValueError):
    """Invalid hyperparameter or option combination."""


class DataError(RipmlError, ValueError):
    """Malformed or inconsistent input data."""


class ParseError(DataError):
    """A dataset file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(DataError):
    """Operands have incompatible dimensions."""


class ModelFormatError(DataError):
    """A model file is truncated, corrupted or otherwise unreadable."""


class VersionError(ModelFormatError):
    """A model file was written by an unsupported format or generator version."""


class NumericError(RipmlError, ArithmeticError):
    """A numerical routine failed (singular system, divergence, non-finite values)."""


class SingularSystemError(NumericError):
    pass


class DivergenceError(NumericError):
    pass
