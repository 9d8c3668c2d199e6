"""Exception hierarchy shared by all modules."""


class TrappingError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TrappingError, ValueError):
    """An argument lies outside the domain of the operation."""


class PoleError(DomainError):
    """Gamma-type function evaluated at a non-positive integer."""


class DivergenceError(TrappingError):
    """No convergent evaluation regime applies."""


class NonConvergedError(TrappingError):
    """An iterative method did not meet its tolerance within its budget."""


class QuadratureError(NonConvergedError):
    """Numerical integration or discretisation refinement failed."""


class ConstraintViolatedError(TrappingError):
    """The net-profit (Lundberg) condition fails; trapping is certain."""


class PremiumExceedsIncomeError(ConstraintViolatedError):
    """Premium rate is at least the income-generation rate."""


class NoAdjustmentCoefficientError(ConstraintViolatedError):
    """The Lundberg equation has no positive root."""


class NoNegativeRootError(ConstraintViolatedError):
    """The decay equation only admits the trivial root."""


class OutOfBuiltRangeError(DomainError):
    """Evaluation requested beyond the range a piecewise solution covers."""


class DegenerateWronskianError(NonConvergedError):
    """Fundamental solutions are numerically dependent."""


class ProbabilityRangeError(NonConvergedError):
    """A probability left [0, 1] by more than round-off."""


class InsufficientDataError(DomainError):
    """Too few usable observations for a fit."""


class DegenerateFitError(DomainError):
    """The regression design is numerically zero."""


class NonConvergenceWarning(RuntimeWarning):
    """A sequence did not look convergent within the available depth."""
