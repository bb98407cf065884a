"""Exception hierarchy.

Each class carries the CLI exit-code category it maps to, so the command
layer can translate failures without inspecting messages.
"""

from __future__ import annotations


class QSMassError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(QSMassError):
    exit_code = 64


class GridError(QSMassError):
    """Invalid grid resolution or mismatched grids."""

    exit_code = 64


class DomainError(QSMassError):
    """A mathematical precondition failed (cone, positivity, convexity)."""

    exit_code = 2


class ConeViolation(DomainError):
    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


class StarShapeLost(DomainError):
    pass


class NotConvex(DomainError):
    pass


class AssumptionViolation(DomainError):
    """K <= 0 or H1 <= 0 somewhere on a band."""


class StepUnderflow(QSMassError):
    exit_code = 2


class BoundViolation(QSMassError):
    """The a-priori barrier certificate was violated by the lapse solver."""

    exit_code = 2


class LinearSolveError(QSMassError):
    exit_code = 2


class GlueMismatch(DomainError):
    pass
