"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations.

    The last iterate is kept on ``last`` so callers can inspect how far it got.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class SolverError(RuntimeError):
    """A root bracket did not contain a sign change."""


class FitQualityError(RuntimeError):
    """A least-squares fit left a residual above the accepted bound."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SeriesInstabilityError(ArithmeticError):
    """A series lost too many digits to cancellation to be trusted."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition
