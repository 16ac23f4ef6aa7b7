"""Exception and warning types raised across the package."""

import numpy as np


class ArgumentError(ValueError):
    """Invalid shapes, sizes or option combinations."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A triangular factor has a zero (or numerically zero) diagonal entry.

    The offending zero-based column index is stored on ``column``.
    """

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"matrix is singular at column {column}")


class ConvergenceError(np.linalg.LinAlgError):
    """An iterative kernel failed to converge.

    ``partial`` carries whatever the kernel managed to compute, or None.
    """

    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)


class ConditioningError(np.linalg.LinAlgError):
    """A sketched basis is too ill-conditioned for the requested method."""

    def __init__(self, cond, message=None):
        self.cond = cond
        super().__init__(message or f"sketched basis has condition number {cond:.3e}")


class BreakdownError(ArgumentError):
    """A Krylov recurrence could not produce the columns it needs."""


class DegenerateBoxError(BreakdownError):
    """Spectral estimation broke down before it could bound the spectrum."""


class ParseError(ValueError):
    """Malformed MatrixMarket input. ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ConditioningWarning(RuntimeWarning):
    """Results computed from a basis whose sketch exceeded the condition tolerance."""


class StagnationWarning(RuntimeWarning):
    """Restarted solver stopped reducing the residual."""
