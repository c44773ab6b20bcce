"""Exception taxonomy shared across the package.

Estimators and solvers raise these instead of bare ValueError so the CLI
can map failure classes to stable exit codes.
"""


class DrumheatError(Exception):
    """Base class for all package errors."""


class ConstraintViolated(DrumheatError):
    """A structural precondition on the input objects fails (e.g. the
    similitude coefficients violate sum r^d < 1 < sum r^(d-1))."""


class DomainError(DrumheatError):
    """A parameter is outside the supported range (alpha, t, beta, ...)."""


class ToleranceNotMet(DrumheatError):
    """Adaptive quadrature exhausted its subdivision budget."""


class GridTooCoarse(DrumheatError):
    """Grid spacing too large for the requested interpolation accuracy."""


class NoConvergence(DrumheatError):
    """Iteration budget exhausted without meeting the tolerance."""


class InsufficientRange(DrumheatError):
    """Sampled range too short: fitted tails would dominate the result."""


class DeficitNotResolved(DrumheatError):
    """A deficit |D| - estimate is within noise of zero, so its log is
    meaningless for fitting."""


class UnsupportedDomain(DrumheatError):
    """The requested estimator does not support this domain variant."""


class BadPlanFile(DrumheatError):
    """An experiment plan or config file failed to parse."""
