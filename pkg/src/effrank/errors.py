"""Exception hierarchy shared by all modules."""


class EffrankError(Exception):
    """Base class for every error raised by this package."""


class InvalidMatrix(EffrankError, ValueError):
    pass


class ZeroMatrix(EffrankError, ValueError):
    pass


class DimError(EffrankError, ValueError):
    pass


class DomainError(EffrankError, ValueError):
    pass


class ZeroSpectrum(EffrankError, ValueError):
    pass


class UnsupportedAlpha(EffrankError, ValueError):
    pass


class BudgetError(EffrankError, ValueError):
    pass


class NumericalError(EffrankError, ArithmeticError):
    pass


class FitError(EffrankError, ValueError):
    pass


class ConfigError(EffrankError, ValueError):
    """Invalid run configuration; ``keys`` names the offending entries."""

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = tuple(keys)


class DegenerateEstimate(EffrankError, ArithmeticError):
    """The Frobenius estimate was non-positive, so no ratio can be formed.

    The raw components are kept on the exception so callers can still
    report them.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
