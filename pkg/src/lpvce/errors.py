"""Exception types raised across the package."""


class LpVceError(Exception):
    pass


class InvalidArgumentError(LpVceError, ValueError):
    pass


class UnsupportedExponentError(LpVceError, ValueError):
    pass


class InvalidStateError(LpVceError, ValueError):
    pass


class NumericalError(LpVceError, ArithmeticError):
    """A non-finite value appeared during an iterative computation."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class DegenerateDistributionError(LpVceError, ValueError):
    pass
