"""Exception hierarchy shared by the library and the benchmark CLI."""

from __future__ import annotations


class ProbitEvidenceError(Exception):
    """Base class for all package errors."""


class ConfigError(ProbitEvidenceError, ValueError):
    pass


class DataError(ProbitEvidenceError, ValueError):
    pass


class DomainError(ProbitEvidenceError, ValueError):
    pass


class NumericalError(ProbitEvidenceError, ArithmeticError):
    pass


class FactorizationError(NumericalError):
    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (failing pivot {pivot})")


class ConvergenceError(NumericalError):
    def __init__(self, message: str, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class SeparationError(NumericalError):
    pass


class QuadratureAccuracyError(NumericalError):
    def __init__(self, fine: float, coarse: float, tol: float):
        self.fine = fine
        self.coarse = coarse
        super().__init__(
            f"quadrature self-check failed: fine={fine!r}, coarse={coarse!r}, "
            f"|diff|={abs(fine - coarse):.3e} >= {tol:.1e}"
        )
