"""Exception hierarchy.

Every error raised on purpose by the package derives from ``StsenseError`` so
callers (and the CLI) can tell data problems from programming errors.
"""


class StsenseError(Exception):
    """Base class for all package errors."""


class DataError(StsenseError, ValueError):
    """Input data violates a structural invariant."""


class IndexOutOfRangeError(DataError, IndexError):
    """A spatial index falls outside the grid it refers to."""

    def __init__(self, index, upper, what="index"):
        self.index = index
        self.upper = upper
        super().__init__(f"{what} {index} outside [1, {upper}]")


class DegenerateInputError(DataError):
    """Input has no usable content (e.g. an all-zero snapshot matrix)."""


class FormatError(DataError):
    """Base class for file-format errors."""


class MalformedHeaderError(FormatError):
    pass


class DimensionMismatchError(FormatError):
    pass


class NonFiniteValueError(FormatError):
    pass


class ConvergenceError(StsenseError, RuntimeError):
    """The l1 solver hit its iteration cap; ``diagnostics`` holds the state."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
