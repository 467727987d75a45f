"""Exception hierarchy.

Two families: :class:`ValidationError` for bad inputs (CLI exit code 1) and
:class:`NumericalError` for failures of a numerical stage (CLI exit code 2).
"""


class MBError(Exception):
    """Base class for all package errors."""


class ValidationError(MBError, ValueError):
    pass


class NumericalError(MBError, ArithmeticError):
    pass


# -- input / domain -------------------------------------------------------
class OrderingViolation(ValidationError):
    pass


class ExponentOutOfRange(ValidationError):
    pass


class NonpositiveInterval(ValidationError):
    pass


class NonpositiveTheta(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class SideRequired(ValidationError):
    pass


class BranchCutError(ValidationError):
    pass


class SpecMismatch(ValidationError):
    pass


class CoincidesWithPoint(ValidationError):
    pass


# -- numerical ------------------------------------------------------------
class BracketFailure(NumericalError):
    pass


class ToleranceNotMet(NumericalError):
    pass


class NewtonDivergence(NumericalError):
    def __init__(self, msg, last_iterate=None, residual=None):
        super().__init__(msg)
        self.last_iterate = last_iterate
        self.residual = residual


class ContinuationStall(NumericalError):
    pass


class NonFiniteSample(NumericalError):
    pass


class QuadratureStall(NumericalError):
    pass


class SingularMatrix(NumericalError):
    def __init__(self, msg, n=None, pivot_index=None):
        super().__init__(msg)
        self.n = n
        self.pivot_index = pivot_index


class PrecisionLoss(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class InsufficientESS(NumericalError):
    pass
