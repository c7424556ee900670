"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`JumpfolioError`.  The CLI maps :class:`ConfigError` to exit code 2
and any other :class:`JumpfolioError` to exit code 3.
"""


class JumpfolioError(ValueError):
    """Base class for domain errors."""


class ConfigError(JumpfolioError):
    """Malformed or schema-invalid configuration document."""


class InvalidMeasure(JumpfolioError):
    pass


class SolvencyViolation(JumpfolioError):
    """``1 + y*z <= 0`` somewhere on the jump support."""


class InvalidGamma(JumpfolioError):
    pass


class EmptyPositiveSupport(JumpfolioError):
    pass


class NotPositiveDefinite(JumpfolioError):
    pass


class ShapeMismatch(JumpfolioError):
    pass


class DegenerateCorrelation(JumpfolioError):
    pass


class SingularSigma(JumpfolioError):
    pass


class NonCoercive(JumpfolioError):
    """The objective is unbounded below, so no minimizer exists."""


class NonConvergence(JumpfolioError):
    pass


class AssumptionViolated(JumpfolioError):
    """Covariance does not leave the span of the sector indicators invariant."""


class TransversalityViolated(JumpfolioError):
    """Consumption constant ``K <= 0``; the value function is not valid."""


class NonPositiveExcessReturn(JumpfolioError):
    pass


class OutOfRegime(JumpfolioError):
    pass


class TransversalityWarning(UserWarning):
    pass
