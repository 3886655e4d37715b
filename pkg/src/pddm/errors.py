"""Exception types shared across the package."""


class PddmError(Exception):
    """Base class for all package errors."""


class DimensionError(PddmError, ValueError):
    pass


class NumericInputError(PddmError, ValueError):
    pass


class ContractError(PddmError, ValueError):
    """A documented precondition of an operation does not hold."""


class UnsupportedConfigError(PddmError, ValueError):
    pass


class DegenerateRangeError(PddmError, ValueError):
    pass


class ContainmentError(PddmError, ValueError):
    pass


class EmptyInputError(PddmError, ValueError):
    pass


class StageOverflowError(PddmError, ValueError):
    pass


class FormatError(PddmError, ValueError):
    """Malformed file contents. ``offset`` is the byte offset when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(PddmError, ValueError):
    pass


class DivergenceError(PddmError, RuntimeError):
    def __init__(self, message, last_finite_step):
        super().__init__(message)
        self.last_finite_step = last_finite_step
