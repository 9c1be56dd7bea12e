"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Operand extents are incompatible with the requested operation."""


class InvalidArgumentError(ValueError):
    """A scalar parameter is outside its admissible range."""


class CapacityExceededError(ValueError):
    """The exact oracle was asked to solve an instance larger than its guard."""


class DivergenceError(RuntimeError):
    """An iterative solver produced a non-finite value.

    ``trace`` holds whatever was recorded before the failure, so callers can
    still persist a partial loss history.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class IllPosedWarning(UserWarning):
    """The least-squares problem does not determine a unique solution."""
