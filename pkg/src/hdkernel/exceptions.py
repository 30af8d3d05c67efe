"""Exception hierarchy.

The three top-level families map onto the command-line exit codes:
:class:`DataError` -> 1, :class:`ConfigError` -> 2, :class:`NumericalError` -> 3.
"""


class HdKernelError(Exception):
    """Base class for every error raised by this package."""


class DataError(HdKernelError, ValueError):
    """Input data could not be read or does not fit the model."""


class FormatError(DataError):
    """Structural problem in an input file (ragged rows, bad indices)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ParseError(DataError):
    """A cell could not be converted to a number."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class EmptyInputError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class InsufficientSamplesError(DataError):
    pass


class IntegrityError(DataError):
    """A serialized model is truncated or its checksum does not match."""


class UnsupportedVersionError(DataError):
    pass


class ConfigError(HdKernelError, ValueError):
    """Invalid parameter values or option combinations."""


class NumericalError(HdKernelError, ArithmeticError):
    """A numerical routine failed or produced unusable output."""


class NotConvergedError(NumericalError):
    pass
