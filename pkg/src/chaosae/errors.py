"""Exception hierarchy shared across the toolkit.

The CLI maps these onto stable exit codes: invalid input -> 1,
numerical failure -> 2, I/O failure -> 3.
"""


class ChaosAEError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(ChaosAEError, ValueError):
    """Arguments or configuration violate a documented precondition."""


class NumericalBlowupError(ChaosAEError, ArithmeticError):
    """Integration produced non-finite values.

    Carries the index of the failing step so long runs can be diagnosed.
    """

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class TrainingDivergedError(ChaosAEError, ArithmeticError):
    """Training loss became non-finite; carries the epoch index."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class ModelFormatError(ChaosAEError, ValueError):
    """A model file could not be parsed; carries the byte offset if known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(ModelFormatError):
    """Model file declares a format version this build does not read."""
