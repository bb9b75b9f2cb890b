"""Exception hierarchy shared by all modules."""

from __future__ import annotations

__all__ = [
    "DelayOCError",
    "GridError",
    "NonCommensurate",
    "OrderViolation",
    "NonPositive",
    "IndexOutOfRange",
    "DimensionMismatch",
    "CustomArrayViolatesPins",
    "PinnedNodeError",
    "NonFiniteValue",
    "NonPositivePenalty",
    "LineSearchFailure",
    "InnerSolveFailure",
    "SingularKKT",
    "ProblemTooLarge",
    "ParseError",
    "ValidationError",
]


class DelayOCError(Exception):
    """Base class for every error raised by this package."""


class GridError(DelayOCError, ValueError):
    pass


class NonCommensurate(GridError):
    pass


class OrderViolation(GridError):
    pass


class NonPositive(GridError):
    pass


class IndexOutOfRange(DelayOCError, IndexError):
    pass


class DimensionMismatch(DelayOCError, ValueError):
    pass


class CustomArrayViolatesPins(DelayOCError, ValueError):
    pass


class PinnedNodeError(DelayOCError, ValueError):
    """Raised on an attempt to overwrite a history node, the final node or u(0)."""


class NonFiniteValue(DelayOCError, FloatingPointError):
    pass


class NonPositivePenalty(DelayOCError, ValueError):
    pass


class LineSearchFailure(DelayOCError, RuntimeError):
    pass


class InnerSolveFailure(DelayOCError, RuntimeError):
    """An inner minimization failed during the penalty loop.

    ``partial_report`` holds the stages completed before the failure.
    """

    def __init__(self, message, partial_report=None):
        super().__init__(message)
        self.partial_report = partial_report


class SingularKKT(DelayOCError, ArithmeticError):
    pass


class ProblemTooLarge(DelayOCError, ValueError):
    pass


class ParseError(DelayOCError, ValueError):
    def __init__(self, message, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class ValidationError(DelayOCError, ValueError):
    """A problem-file field violates one of the model invariants."""

    def __init__(self, field, rule):
        super().__init__(f"{field}: {rule}")
        self.field = field
        self.rule = rule
