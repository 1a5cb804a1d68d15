"""Exception hierarchy.

``ValidationError`` covers bad inputs (CLI exit code 1) and
``ComputationError`` covers numerical failures on valid inputs (exit code 2).
"""
from __future__ import annotations


class HistVarError(Exception):
    """Base class for all package errors."""

    module = "histvar"


class ValidationError(HistVarError, ValueError):
    pass


class ComputationError(HistVarError, ArithmeticError):
    pass


class EmptyWindowError(ValidationError):
    pass


class OutOfRangeError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class DegenerateInputError(ComputationError):
    pass


class NearZeroDenominatorError(ComputationError):
    def __init__(self, message: str, dates=()):
        super().__init__(message)
        self.dates = list(dates)


class NonPositiveScaleError(ComputationError):
    def __init__(self, message: str, level: float | None = None):
        super().__init__(message)
        self.level = level


class ConvergenceError(ComputationError):
    def __init__(self, message: str, pillar: float | None = None):
        super().__init__(message)
        self.pillar = pillar


class SingularDesignError(ComputationError):
    pass
