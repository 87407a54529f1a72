"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class OrderingError(DomainError):
    """Time arguments given in the wrong order."""


class DivergenceError(OverflowError):
    """The requested quantity diverges at this argument."""


class AccuracyError(RuntimeError):
    """Quadrature did not reach the requested tolerance.

    The best available value and its error estimate are attached.
    """

    def __init__(self, message, value=None, error_estimate=None):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate


class BudgetError(RuntimeError):
    """Requested discretization exceeds the desk-scale budget."""


class UnsupportedDimensionError(ValueError):
    pass


class IncompatibilityError(ValueError):
    """Objects built with different discretization rules were combined."""


class ConfigError(ValueError):
    pass


class BlowupError(ArithmeticError):
    """Non-finite values appeared during a fixed-point iteration."""


class NoLocalSolutionError(RuntimeError):
    def __init__(self, message, horizon=None, residual=None):
        super().__init__(message)
        self.horizon = horizon
        self.residual = residual


class FitError(ValueError):
    pass
