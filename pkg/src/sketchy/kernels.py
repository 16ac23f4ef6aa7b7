"""Small dense linear-algebra kernels.

Everything here operates on matrices whose dimensions are of the order of the
sketch size, so LAPACK does the heavy lifting for batch factorizations. The
incremental QR used by the iterative solvers is a column-at-a-time Householder
factorization kept here so that its factors agree with the batch routine.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ArgumentError, ConvergenceError, SingularMatrixError

__all__ = [
    "ComplexEigenDecomposition",
    "SketchedQr",
    "TruncatedSvd",
    "cond_estimate",
    "dense_eig",
    "householder_qr",
    "qr_append_column",
    "solve_upper_triangular",
    "truncated_svd",
]

# relative size below which a new diagonal entry of T marks a dependent column
RANK_TOL = 1e-14


def _as_finite_matrix(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ArgumentError(f"{name} must be two-dimensional, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ArgumentError(f"{name} has non-finite entries")
    return M


def householder_qr(M):
    """Thin QR factorization ``M = U @ T`` with a nonnegative diagonal on T.

    Parameters
    ----------
    M : (s, d) array_like, s >= d

    Returns
    -------
    U : (s, d) ndarray with orthonormal columns
    T : (d, d) upper triangular ndarray
    """
    M = _as_finite_matrix(M)
    s, d = M.shape
    if s < d:
        raise ArgumentError(f"householder_qr needs s >= d, got {s} x {d}")
    if d == 0:
        return np.zeros((s, 0)), np.zeros((0, 0))
    U, T = np.linalg.qr(M, mode="reduced")
    signs = np.where(np.diag(T) < 0, -1.0, 1.0)
    return U * signs, T * signs[:, None]


class SketchedQr:
    """Householder QR factors of a matrix that grows one column at a time.

    The factorization is stored as reflectors, so appending column ``j`` costs
    O(s*j) and never touches earlier columns of ``T``. ``U`` is materialized
    only on request.

    Parameters
    ----------
    s : int
        Row count of the factored matrix.
    capacity : int, optional
        Initial storage for reflectors; grows automatically.
    """

    def __init__(self, s, capacity=16):
        self.s = int(s)
        cap = max(1, min(int(capacity), self.s))
        self._V = np.zeros((self.s, cap))
        self._beta = np.zeros(cap)
        self._T = np.zeros((cap, cap))
        self.ncols = 0
        self.deficient = []  # zero-based columns flagged as numerically dependent

    def _grow(self):
        cap = min(2 * self._V.shape[1], self.s)
        V = np.zeros((self.s, cap))
        V[:, : self.ncols] = self._V[:, : self.ncols]
        beta = np.zeros(cap)
        beta[: self.ncols] = self._beta[: self.ncols]
        T = np.zeros((cap, cap))
        T[: self.ncols, : self.ncols] = self._T[: self.ncols, : self.ncols]
        self._V, self._beta, self._T = V, beta, T

    @property
    def T(self):
        return self._T[: self.ncols, : self.ncols].copy()

    @property
    def U(self):
        j = self.ncols
        Q = np.zeros((self.s, j))
        Q[np.arange(j), np.arange(j)] = 1.0
        for i in range(j - 1, -1, -1):
            v = self._V[i:, i]
            Q[i:] -= self._beta[i] * np.outer(v, v @ Q[i:])
        return Q

    @property
    def rank_deficient(self):
        return bool(self.deficient)

    def apply_qt(self, c, start=0, stop=None):
        """Apply reflectors ``start..stop-1`` (transposed Q) to a copy of ``c``."""
        c = np.array(c, dtype=float)
        stop = self.ncols if stop is None else stop
        for i in range(start, stop):
            v = self._V[i:, i]
            c[i:] -= self._beta[i] * v * (v @ c[i:])
        return c

    def append(self, c):
        """Append column ``c``; return True if it was flagged as dependent."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.s,):
            raise ArgumentError(f"column must have length {self.s}, got shape {c.shape}")
        j = self.ncols
        if j >= self.s:
            raise ArgumentError("cannot append more than s columns")
        if j >= self._V.shape[1]:
            self._grow()
        cnorm = np.linalg.norm(c)
        w = self.apply_qt(c)
        x = w[j:]
        alpha = np.linalg.norm(x)
        flagged = alpha <= RANK_TOL * cnorm
        v = np.zeros_like(x)
        beta = 0.0
        if alpha > 0.0:
            # reflector mapping x to alpha*e1, alpha >= 0, computed without cancellation
            v[:] = x
            if x[0] > 0:
                v[0] = -(x[1:] @ x[1:]) / (x[0] + alpha)
            else:
                v[0] = x[0] - alpha
            vv = v @ v
            if vv > 0.0:
                beta = 2.0 / vv
        self._V[j:, j] = v
        self._V[:j, j] = 0.0
        self._beta[j] = beta
        self._T[:j, j] = w[:j]
        self._T[j, j] = alpha
        self.ncols = j + 1
        if flagged:
            self.deficient.append(j)
        return bool(flagged)

    def truncate(self, j):
        """Drop every column from index ``j`` on."""
        if not 0 <= j <= self.ncols:
            raise ArgumentError(f"cannot truncate {self.ncols} columns to {j}")
        self._V[:, j : self.ncols] = 0.0
        self._beta[j : self.ncols] = 0.0
        self._T[:, j : self.ncols] = 0.0
        self._T[j : self.ncols, :] = 0.0
        self.ncols = j
        self.deficient = [i for i in self.deficient if i < j]

    def copy(self):
        other = SketchedQr.__new__(SketchedQr)
        other.s = self.s
        other._V = self._V.copy()
        other._beta = self._beta.copy()
        other._T = self._T.copy()
        other.ncols = self.ncols
        other.deficient = list(self.deficient)
        return other


def qr_append_column(state, c):
    """Append ``c`` to the incremental factorization ``state`` (in place) and return it."""
    state.append(c)
    return state


@dataclass(frozen=True)
class TruncatedSvd:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return self.sigma.size


def _svd(M, full=True):
    try:
        return sla.svd(M, full_matrices=False, compute_uv=full, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return sla.svd(M, full_matrices=False, compute_uv=full, lapack_driver="gesvd")


def truncated_svd(M, tol):
    """SVD of ``M`` truncated to the largest rank with ``sigma_1 / sigma_r <= tol``."""
    if not tol > 1:
        raise ArgumentError(f"truncation tolerance must exceed 1, got {tol}")
    M = _as_finite_matrix(M)
    s, d = M.shape
    if M.size == 0 or not np.any(M):
        return TruncatedSvd(np.zeros((s, 0)), np.zeros(0), np.zeros((d, 0)))
    U, sigma, Vt = _svd(M)
    keep = sigma > 0
    keep &= sigma[0] <= tol * sigma
    r = int(np.count_nonzero(keep))
    return TruncatedSvd(U[:, :r], sigma[:r], Vt[:r].T)


@dataclass(frozen=True)
class ComplexEigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray


def _eig_order(values):
    return np.lexsort((-values.imag, -values.real))


def dense_eig(M):
    """Eigenvalues and unit eigenvectors of a real square matrix.

    Pairs are ordered by descending real part, ties broken by descending
    imaginary part, so a conjugate pair appears as ``(a+bi, a-bi)``.
    """
    M = _as_finite_matrix(M)
    d = M.shape[0]
    if d == 0 or M.shape[1] != d:
        raise ArgumentError(f"dense_eig needs a nonempty square matrix, got {M.shape}")
    try:
        values, vectors = sla.eig(M, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"QR iteration failed to converge: {exc}") from exc
    order = _eig_order(values)
    return ComplexEigenDecomposition(values[order], vectors[:, order])


def solve_upper_triangular(T, b):
    """Solve ``T y = b`` by back substitution; ``b`` may hold several columns."""
    T = np.asarray(T, dtype=float)
    b = np.asarray(b)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or b.shape[0] != T.shape[0]:
        raise ArgumentError(f"shape mismatch: T {T.shape}, b {b.shape}")
    zero = np.flatnonzero(np.diag(T) == 0)
    if zero.size:
        raise SingularMatrixError(int(zero[0]))
    return sla.solve_triangular(T, b, lower=False, check_finite=False)


def cond_estimate(T):
    """Spectral condition number from the singular values of a small matrix."""
    T = np.asarray(T, dtype=float)
    if T.size == 0:
        return 1.0
    if not np.all(np.isfinite(T)):
        return np.inf
    sigma = _svd(T, full=False)
    if sigma[-1] == 0 or not np.isfinite(sigma[0] / sigma[-1]):
        return np.inf
    return float(sigma[0] / sigma[-1])
