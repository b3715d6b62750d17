"""Exception hierarchy; each class carries the CLI exit code it maps to."""

from __future__ import annotations


class ScreenGapError(Exception):
    exit_code = 1


class ParameterError(ScreenGapError, ValueError):
    """Input outside the admissible parameter domain."""

    exit_code = 2


class GeometryError(ParameterError):
    """Parameters are admissible individually but the geometry is not."""


class NumericalError(ScreenGapError, RuntimeError):
    """Factorization breakdown or a solve that did not converge."""

    exit_code = 3


class BudgetError(NumericalError):
    """Iteration cap reached; ``partial`` holds whatever was computed."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConsistencyError(ScreenGapError):
    """An internal invariant (e.g. eigenvalue bracketing) was violated."""

    exit_code = 4
