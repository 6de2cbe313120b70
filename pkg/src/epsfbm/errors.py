"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class EpsFbmError(Exception):
    """Base class for package errors."""


class DomainError(EpsFbmError, ValueError):
    """A parameter lies outside its admissible range."""


class NumericalError(EpsFbmError, ArithmeticError):
    """A numerical procedure failed (factorization, overflow, retry cap)."""


class IllConditionedCovariance(NumericalError):
    """Cholesky failed even after the maximum diagonal jitter."""


class EmbeddingFailure(NumericalError):
    """Circulant embedding produced a significantly negative eigenvalue."""


class DegenerateConditioning(NumericalError):
    """A pivot of the sequential bridge recursion vanished."""
