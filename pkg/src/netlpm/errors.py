"""Exception and warning types raised across the package."""


class NetLpmError(Exception):
    """Base class for all errors raised by netlpm."""


class DenominatorZeroOnGrid(NetLpmError, ValueError):
    pass


class ParseError(NetLpmError, ValueError):
    pass


class InvariantViolation(NetLpmError, ValueError):
    """A model or config violates a structural invariant.

    ``path`` names the offending field (e.g. ``modules[3]``).
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class UnknownNode(NetLpmError, KeyError):
    pass


class SingularAtLine(NetLpmError, ArithmeticError):
    pass


class NotPSD(NetLpmError, ValueError):
    pass


class DivergedSimulation(NetLpmError, ArithmeticError):
    pass


class RankDeficientWindow(NetLpmError, ArithmeticError):
    pass


class InsufficientLines(NetLpmError, ValueError):
    pass


class EmptyReferenceSet(NetLpmError, ValueError):
    pass


class GridMismatch(NetLpmError, ValueError):
    pass


class RankDeficient(NetLpmError, ArithmeticError):
    pass


class NonFiniteCost(NetLpmError, ArithmeticError):
    pass


class UnstableNoiseInverse(NetLpmError, ArithmeticError):
    pass


class DegenerateTruth(NetLpmError, ValueError):
    pass


class DidNotConverge(RuntimeWarning):
    """Optimizer hit its iteration cap; the best iterate is returned."""


class PredictorSetWarning(UserWarning):
    """The predictor set fails at least one predictor-input condition."""
