"""Exception hierarchy. Each class maps to one CLI exit code."""


class TreenetError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ShapeError(TreenetError, ValueError):
    """Operand shapes are incompatible.

    The message always names the offending dimensions.
    """

    exit_code = 2


class SpecError(TreenetError, ValueError):
    """A tree specification, graph or configuration is invalid."""

    exit_code = 2


class DataError(TreenetError):
    """An input file or corpus could not be used."""

    exit_code = 3

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CIError(TreenetError, ValueError):
    """Contribution-index inputs violate their preconditions."""

    exit_code = 3


class DivergenceError(TreenetError, FloatingPointError):
    """Training produced a non-finite loss."""

    exit_code = 4

    def __init__(self, step, loss):
        super().__init__(f"loss became non-finite ({loss}) at step {step}")
        self.step = step
        self.loss = loss
