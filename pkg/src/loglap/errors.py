"""Exception types raised across the package."""

from __future__ import annotations


class LogLapError(Exception):
    """Base class for all package errors."""


class EmptyGrid(LogLapError):
    pass


class GridNotSymmetric(LogLapError):
    pass


class BoundaryOutsideGrid(LogLapError):
    pass


class UnsupportedDimension(LogLapError):
    pass


class SingularArgument(LogLapError):
    pass


class PointOutsideDomain(LogLapError):
    pass


class QuadratureDivergence(LogLapError):
    pass


class NonPowerOfTwoGrid(LogLapError):
    pass


class SolverError(LogLapError):
    """Raised when a discrete solve cannot produce an answer."""


class NotCoercive(SolverError):
    """The stiffness matrix is not positive definite (lambda_1 <= 0 at this resolution)."""


class NoConvergence(SolverError):
    pass


class SingularJacobian(SolverError):
    pass


class ParseError(LogLapError):
    def __init__(self, line: int | None, message: str):
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ValidationError(LogLapError):
    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
