"""Exception hierarchy shared across the package.

Validation errors signal rejected inputs; numerical errors signal failures
of a computation that was given valid inputs.
"""


class VarcompError(Exception):
    """Base class for all package errors."""


class ValidationError(VarcompError):
    """Input data violates a model precondition."""


class RankDeficientX(ValidationError):
    """Design matrix has column rank below its column count."""


class NonSymmetricKernel(ValidationError):
    """Kernel matrix asymmetry exceeds tolerance."""


class TooFewObservations(ValidationError):
    """Need n > p (and n >= 2) for restricted-likelihood inference."""


class DimensionMismatch(ValidationError):
    """Array shapes are inconsistent with each other."""


class IndefiniteKernel(ValidationError):
    """Kernel has a negative eigenvalue beyond the semidefiniteness repair tolerance."""


class NumericalError(VarcompError):
    """A computation failed despite valid inputs."""


class EigenFailure(NumericalError):
    """Symmetric eigensolver did not converge."""


class NumericalOverflow(NumericalError):
    """A variance weight denominator was not strictly positive."""


class SingularGram(NumericalError):
    """Weighted Gram matrix of the design is numerically singular."""


class SingularInformation(NumericalError):
    """Restricted information matrix is numerically singular.

    Occurs exactly when the projected kernel is proportional to the
    identity (e.g. K = c I), which makes the variance proportion
    unidentifiable.
    """


class EmptyRegion(NumericalError):
    """No point of the search grid satisfies the test-statistic threshold."""

    def __init__(self, message: str, min_stat: float = float("nan"), evaluations: int = 0):
        super().__init__(message)
        self.min_stat = min_stat
        self.evaluations = evaluations


class NonMonotoneWarning(UserWarning):
    """Signed-root statistic was observed to be non-monotone during a search."""
