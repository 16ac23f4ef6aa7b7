"""Linear operators and test-problem generators.

Solvers touch a matrix only through ``op @ x`` (and ``op.T @ y`` for the
low-rank extension), so any :class:`scipy.sparse.linalg.LinearOperator`,
sparse matrix or dense array works. The classes here add the structured
operators used by the experiments.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError, ParseError

__all__ = [
    "DiagonalOperator",
    "PreconditionedOperator",
    "TrsOperator",
    "as_operator",
    "laplacian_2d",
    "matmat",
    "matvec",
    "planted_diagonal",
    "read_matrix_market",
    "trs_operator",
    "write_matrix_market",
]


def as_operator(A):
    """Wrap a dense array, sparse matrix or operator as a ``LinearOperator``."""
    if isinstance(A, spla.LinearOperator):
        return A
    if not sp.issparse(A):
        A = np.asarray(A, dtype=float)
    return spla.aslinearoperator(A)


def matvec(op, x):
    """``op @ x`` with a dimension check."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != op.shape[1]:
        raise ArgumentError(f"operator of shape {op.shape} cannot act on vector of shape {x.shape}")
    y = op @ x
    return np.asarray(y, dtype=float).reshape(-1)


def matmat(op, X):
    """``op @ X`` for a block of column vectors."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != op.shape[1]:
        raise ArgumentError(f"operator of shape {op.shape} cannot act on block of shape {X.shape}")
    return np.asarray(op @ X, dtype=float)


class DiagonalOperator(spla.LinearOperator):
    def __init__(self, diagonal):
        self.diagonal = np.asarray(diagonal, dtype=float)
        n = self.diagonal.size
        super().__init__(dtype=np.float64, shape=(n, n))

    def _matvec(self, x):
        return self.diagonal * np.ravel(x)

    def _matmat(self, X):
        return self.diagonal[:, None] * X

    _rmatvec = _matvec
    _rmatmat = _matmat

    def _adjoint(self):
        return self


class TrsOperator(spla.LinearOperator):
    """Block operator ``[[A, -g g^T / Delta^2], [-I, A]]`` from the trust-region subproblem.

    ``A`` must be symmetric; ``g`` is the linear term of the quadratic model.
    The sign of the rank-one coupling makes the rightmost eigenvalue real: it
    solves the secular equation ``g^T (lambda I - A)^-2 g = Delta^2`` with
    ``lambda > lambda_max(A)``. Conjugating by ``diag(I, -I)`` gives the usual
    trust-region eigenproblem for the inner matrix ``-A``.
    """

    def __init__(self, A, g, Delta=1.0):
        self.A = A
        self.g = np.asarray(g, dtype=float)
        self.Delta = float(Delta)
        n = self.g.size
        if A.shape != (n, n):
            raise ArgumentError(f"inner matrix shape {A.shape} does not match g of length {n}")
        if not self.Delta > 0:
            raise ArgumentError("trust-region radius must be positive")
        self.n = n
        super().__init__(dtype=np.float64, shape=(2 * n, 2 * n))

    def _matmat(self, X):
        X = np.asarray(X, dtype=float)
        X1, X2 = X[: self.n], X[self.n :]
        top = self.A @ X1 - np.outer(self.g, self.g @ X2) / self.Delta**2
        bottom = -X1 + self.A @ X2
        return np.vstack([top, bottom])

    def _matvec(self, x):
        return self._matmat(np.reshape(x, (-1, 1)))[:, 0]

    def _rmatmat(self, Y):
        Y = np.asarray(Y, dtype=float)
        Y1, Y2 = Y[: self.n], Y[self.n :]
        top = self.A @ Y1 - Y2
        bottom = -np.outer(self.g, self.g @ Y1) / self.Delta**2 + self.A @ Y2
        return np.vstack([top, bottom])

    def _rmatvec(self, y):
        return self._rmatmat(np.reshape(y, (-1, 1)))[:, 0]

    def todense(self):
        A = self.A.toarray() if sp.issparse(self.A) else np.asarray(self.A)
        n = self.n
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = A
        M[:n, n:] = -np.outer(self.g, self.g) / self.Delta**2
        M[n:, :n] = -np.eye(n)
        M[n:, n:] = A
        return M


class PreconditionedOperator(spla.LinearOperator):
    """The operator ``x -> psolve(A @ x)``, i.e. ``inv(P) @ A``.

    ``psolve`` solves ``P z = v`` and is the only access to the preconditioner.
    """

    def __init__(self, A, psolve):
        self.inner = as_operator(A)
        self.psolve = psolve
        super().__init__(dtype=np.float64, shape=self.inner.shape)

    def _matvec(self, x):
        return np.asarray(self.psolve(self.inner @ np.ravel(x)), dtype=float).reshape(-1)

    def rhs(self, f):
        """The preconditioned right-hand side ``inv(P) @ f``."""
        return np.asarray(self.psolve(np.asarray(f, dtype=float)), dtype=float).reshape(-1)


def _neumann_1d(m):
    main = np.full(m, 2.0)
    main[0] = main[-1] = 1.0
    off = -np.ones(m - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def laplacian_2d(m):
    """Five-point Laplacian on an ``m x m`` grid with Neumann boundaries.

    The result is symmetric positive semidefinite of order ``m**2``, its
    kernel is spanned by the constant vector and its spectrum lies in [0, 8].
    """
    if m < 2:
        raise ArgumentError(f"grid side must be at least 2, got {m}")
    T = _neumann_1d(m)
    I = sp.identity(m, format="csr")
    L = (sp.kron(I, T) + sp.kron(T, I)).tocsr()
    L.eliminate_zeros()
    L.sort_indices()
    return L


def trs_operator(n, g_scale=0.01, Delta=1.0, seed=0):
    """Trust-region test operator of order ``2n``.

    The inner matrix is tridiagonal with ``n`` equispaced values in [-1, 1] on
    the diagonal and ones off the diagonal; ``g`` is Gaussian rescaled to norm
    ``g_scale``.
    """
    if n < 2:
        raise ArgumentError(f"TRS dimension must be at least 2, got {n}")
    off = np.ones(n - 1)
    A = sp.diags([off, np.linspace(-1.0, 1.0, n), off], [-1, 0, 1], format="csr")
    g = np.random.default_rng(seed).standard_normal(n)
    g *= g_scale / np.linalg.norm(g)
    return TrsOperator(A, g, Delta)


def planted_diagonal(n, seed=0):
    """Diagonal operator with ten values drawn from [-1, -0.1] and the rest equispaced in [0, 1].

    The planted negative values are exposed as ``op.planted`` (sorted).
    """
    if n <= 10:
        raise ArgumentError(f"planted_diagonal needs n > 10, got {n}")
    rng = np.random.default_rng(seed)
    planted = np.sort(rng.uniform(-1.0, -0.1, size=10))
    op = DiagonalOperator(np.concatenate([planted, np.linspace(0.0, 1.0, n - 10)]))
    op.planted = planted
    return op


def read_matrix_market(path):
    """Read a real coordinate MatrixMarket file into CSR form.

    Symmetric storage is expanded, indices are converted to zero-based and
    duplicate entries are summed.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    header = lines[0].split()
    if len(header) != 5 or header[0] != "%%MatrixMarket" or header[1].lower() != "matrix":
        raise ParseError("missing '%%MatrixMarket matrix' banner", 1)
    fmt, field, symmetry = (h.lower() for h in header[2:])
    if fmt != "coordinate":
        raise ParseError(f"unsupported format {fmt!r}", 1)
    if field not in ("real", "integer"):
        raise ParseError(f"unsupported field {field!r}", 1)
    if symmetry not in ("general", "symmetric"):
        raise ParseError(f"unsupported symmetry {symmetry!r}", 1)

    lineno = 1
    size = None
    rows, cols, vals = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if size is None:
            try:
                size = tuple(int(p) for p in parts)
            except ValueError:
                raise ParseError(f"bad size line {text!r}", lineno) from None
            if len(size) != 3 or min(size) < 0:
                raise ParseError(f"bad size line {text!r}", lineno)
            continue
        if len(parts) != 3:
            raise ParseError(f"expected 'row col value', got {text!r}", lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"cannot parse entry {text!r}", lineno) from None
        if not (1 <= i <= size[0] and 1 <= j <= size[1]):
            raise ParseError(f"index ({i}, {j}) out of range for {size[0]} x {size[1]}", lineno)
        if not np.isfinite(v):
            raise ParseError(f"non-finite value {parts[2]!r}", lineno)
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
    if size is None:
        raise ParseError("missing size line", lineno)
    if len(vals) != size[2]:
        raise ParseError(f"expected {size[2]} entries, found {len(vals)}", lineno)

    rows, cols, vals = np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(vals)
    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    A = sp.coo_matrix((vals, (rows, cols)), shape=size[:2]).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def write_matrix_market(path, A, symmetric=False):
    """Write a sparse matrix in coordinate format (lower triangle only if ``symmetric``)."""
    A = sp.coo_matrix(A)
    rows, cols, vals = A.row, A.col, A.data
    if symmetric:
        keep = rows >= cols
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    order = np.lexsort((rows, cols))
    kind = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {len(vals)}\n")
        for k in order:
            fh.write(f"{rows[k] + 1} {cols[k] + 1} {float(vals[k])!r}\n")
