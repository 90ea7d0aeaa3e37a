"""Exception hierarchy.

``ValidationError`` covers bad inputs (the CLI maps it to exit code 2);
everything else derived from ``GrowResetError`` is a runtime failure (exit 1).
"""


class GrowResetError(Exception):
    """Base class for all package errors."""


class ValidationError(GrowResetError, ValueError):
    """An input violates a documented precondition."""


class DivergentMeanError(ValidationError):
    pass


class NonIntegrableError(ValidationError):
    pass


class NormalizationError(ValidationError):
    pass


class StabilityError(ValidationError):
    """Time step exceeds the explicit scheme's stability / CFL bound."""


class TruncationError(GrowResetError):
    """Probability mass (or an integrand) leaks past the end of a finite grid."""


class NegativeDensityError(GrowResetError):
    pass


class FitError(GrowResetError):
    pass
