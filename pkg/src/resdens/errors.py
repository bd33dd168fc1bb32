"""Exception hierarchy shared across the package."""


class ResdensError(Exception):
    """Base class for all errors raised by resdens."""


class DimensionError(ResdensError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(ResdensError, ValueError):
    """A configuration value or file is inconsistent."""


class LabelError(ResdensError, ValueError):
    """A class label lies outside the valid range."""


class UsageError(ResdensError, RuntimeError):
    """An API was called in a state that does not permit it."""


class NumericError(ResdensError, ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class ParseError(ResdensError, ValueError):
    """Malformed input file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset
