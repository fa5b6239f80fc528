"""Exception hierarchy for the plds package."""


class PldsError(Exception):
    """Base class for all errors raised by plds."""


class CurveError(PldsError, ValueError):
    """Invalid piecewise linear characteristic."""


class SlopeMismatch(CurveError):
    pass


class NonMonotone(CurveError):
    pass


class BadSign(CurveError):
    pass


class BadParams(PldsError, ValueError):
    pass


class DegenerateLine(PldsError):
    """Zero isocline is ambiguously close to coinciding with a dropping section."""


class NumericalError(PldsError, ArithmeticError):
    """Base class for failures of the numerical machinery."""


class ToleranceExhausted(NumericalError):
    """Root isolation failed, typically at a near tangency with a sewing line."""

    def __init__(self, message, tau=None, arc_index=None):
        super().__init__(message)
        self.tau = tau
        self.arc_index = arc_index


class OffSection(PldsError, ValueError):
    pass


class OpenTrajectory(PldsError, ValueError):
    pass


class NoSolution(NumericalError):
    pass


class NoRoot(NumericalError):
    pass


class NotSaddle(PldsError, ValueError):
    pass


class NoSignChange(NumericalError):
    pass


class GeometryError(NumericalError):
    pass


class BadRange(PldsError, ValueError):
    pass
