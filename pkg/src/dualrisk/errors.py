"""Exception types shared across the package.

Each error belongs to one of three families that the command line maps to
exit codes: input problems (``InputError``), unsupported model/functional
combinations (``UnsupportedError``) and numerical failures (``NumericalError``).
"""


class DualRiskError(Exception):
    """Base class for every error raised by the package."""


class InputError(DualRiskError, ValueError):
    """Malformed input: bad parameters, bad scenario files."""


class UnsupportedError(DualRiskError):
    """A valid request that the requested model or method cannot serve."""


class NumericalError(DualRiskError, ArithmeticError):
    """A numerical procedure failed or could not certify its result."""


# input
class ParseError(InputError):
    pass


class DomainError(InputError):
    pass


class OrderError(InputError):
    pass


# unsupported
class UnsupportedCombination(UnsupportedError):
    pass


class UnsupportedFunctional(UnsupportedError):
    pass


class NoDensityError(UnsupportedCombination):
    pass


class ConvergenceGuard(UnsupportedCombination):
    pass


# numerical
class PoleError(NumericalError):
    pass


class MismatchError(NumericalError):
    pass


class DivByZeroJet(NumericalError, ZeroDivisionError):
    pass


class SingularError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class PoleProximity(NumericalError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NonCommutingMaps(NumericalError):
    pass


class CountMismatch(NumericalError):
    pass


class OnContourZero(NumericalError):
    pass


class NonConvergedRadius(NumericalError):
    pass


class NodeOnPole(NumericalError):
    pass


class TruncationError(NumericalError):
    pass


class RejectionBudgetError(NumericalError):
    pass
