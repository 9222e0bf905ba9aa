"""Exception types raised by ifsfit."""


class IFSError(Exception):
    """Base class for all ifsfit errors."""


class InvalidSpec(IFSError, ValueError):
    pass


class ZeroSpan(InvalidSpec):
    pass


class DegenerateSegment(InvalidSpec):
    pass


class BudgetExceeded(IFSError):
    pass


class EmptySegmentList(IFSError, ValueError):
    pass


class TooFewSegments(IFSError, ValueError):
    pass


class ShapeMismatch(IFSError, ValueError):
    pass


class ViewportTooSmall(IFSError, ValueError):
    pass


class UnknownPreset(IFSError, KeyError):
    pass


class NonFiniteGradient(IFSError, FloatingPointError):
    """Gradient contained NaN or Inf.

    ``step`` is set by the optimizer to the index of the failing step.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
