"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Arguments violate a documented precondition."""


class NumericalError(ArithmeticError):
    """A factorization or decomposition failed beyond the allowed repair."""


class ConvergenceError(NumericalError):
    """An iterative solver ran out of iterations.

    The last residual is kept on ``residual`` so callers can log it.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual
