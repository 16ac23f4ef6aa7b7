"""Randomized subspace embeddings.

Two families are provided:

* ``trig``: a subsampled randomized trigonometric transform
  ``S = sqrt(n/s) * D @ F @ E`` where ``E`` is a random sign diagonal, ``F``
  the orthonormal DCT-II and ``D`` selects ``s`` distinct rows.
* ``sparse``: a sparse sign map whose columns each carry ``zeta`` entries
  equal to ``+-1/sqrt(zeta)`` in distinct random rows.

Both are real, seeded, and reproducible bit for bit.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ArgumentError, SingularMatrixError
from .kernels import RANK_TOL

__all__ = [
    "Embedding",
    "apply",
    "apply_adjoint",
    "distortion",
    "make_embedding",
    "sampled_distortion",
    "sketch_dim",
    "sparse_zeta",
    "whiten",
]

KINDS = ("trig", "sparse")


def sketch_dim(d, eps=1 / math.sqrt(2)):
    """Embedding dimension ``ceil(d / eps**2)`` for a target distortion ``eps``."""
    if not 0 < eps < 1:
        raise ArgumentError(f"distortion must lie in (0, 1), got {eps}")
    # round before ceil so that eps = 1/sqrt(2) gives exactly 2d
    return int(math.ceil(round(d / eps**2, 9)))


def sparse_zeta(d):
    """Nonzeros per column of the sparse map for a ``d``-dimensional subspace."""
    return max(1, math.ceil(2 * math.log(1 + d)))


@dataclass(frozen=True, eq=False)
class Embedding:
    """An ``s x n`` random embedding. Build instances with :func:`make_embedding`."""

    kind: str
    n: int
    s: int
    seed: int
    signs: np.ndarray = None
    rows: np.ndarray = None
    zeta: int = 0
    positions: np.ndarray = None
    values: np.ndarray = None
    _matrix: sp.csr_matrix = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "sparse" and self._matrix is None:
            indptr = np.arange(0, self.n * self.zeta + 1, self.zeta)
            csc = sp.csc_matrix(
                (self.values.ravel(), self.positions.ravel(), indptr), shape=(self.s, self.n)
            )
            object.__setattr__(self, "_matrix", csc.tocsr())

    @property
    def scale(self):
        if self.kind == "trig":
            return math.sqrt(self.n / self.s)
        return 1.0 / math.sqrt(self.zeta)

    @property
    def shape(self):
        return (self.s, self.n)

    def __matmul__(self, M):
        return apply(self, M)

    def todense(self):
        return apply(self, np.eye(self.n))


def _distinct_positions(rng, n, s, zeta):
    pos = rng.integers(0, s, size=(n, zeta))
    while True:
        srt = np.sort(pos, axis=1)
        bad = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
        if bad.size == 0:
            return pos
        pos[bad] = rng.integers(0, s, size=(bad.size, zeta))


def make_embedding(kind, n, s, seed=0, *, d=None, zeta=None):
    """Draw a seeded ``s x n`` embedding.

    Parameters
    ----------
    kind : {"trig", "sparse"}
    n : int
        Ambient dimension.
    s : int
        Embedding dimension, ``1 <= s <= n``.
    seed : int
    d : int, optional
        Dimension of the subspace to be embedded. Only used to pick the sparse
        map's column sparsity; defaults to ``s // 2``.
    zeta : int, optional
        Explicit column sparsity for the sparse map (overrides ``d``).
    """
    n, s = int(n), int(s)
    if kind not in KINDS:
        raise ArgumentError(f"unknown embedding kind {kind!r}; expected one of {KINDS}")
    if not 1 <= s <= n:
        raise ArgumentError(f"embedding dimension must satisfy 1 <= s <= n, got s={s}, n={n}")
    rng = np.random.default_rng(seed)
    if kind == "trig":
        signs = rng.choice(np.array([-1.0, 1.0]), size=n)
        rows = rng.choice(n, size=s, replace=False)
        return Embedding("trig", n, s, seed, signs=signs, rows=rows)
    if zeta is None:
        zeta = sparse_zeta(max(1, s // 2) if d is None else d)
    zeta = min(int(zeta), s)
    positions = _distinct_positions(rng, n, s, zeta)
    values = rng.choice(np.array([-1.0, 1.0]), size=(n, zeta)) / math.sqrt(zeta)
    return Embedding("sparse", n, s, seed, zeta=zeta, positions=positions, values=values)


def apply(S, M):
    """Sketch a vector or the columns of an ``n x k`` matrix."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != S.n:
        raise ArgumentError(f"embedding expects {S.n} rows, got {M.shape[0]}")
    if S.kind == "sparse":
        return S._matrix @ M
    X = M * S.signs if M.ndim == 1 else M * S.signs[:, None]
    Y = sfft.dct(X, type=2, norm="ortho", axis=0)
    return S.scale * Y[S.rows]


def apply_adjoint(S, Y):
    """Apply ``S.T`` to a length-``s`` vector or an ``s x k`` matrix."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != S.s:
        raise ArgumentError(f"adjoint expects {S.s} rows, got {Y.shape[0]}")
    if S.kind == "sparse":
        return S._matrix.T @ Y
    Z = np.zeros((S.n,) + Y.shape[1:])
    Z[S.rows] = S.scale * Y
    X = sfft.idct(Z, type=2, norm="ortho", axis=0)
    return X * S.signs if X.ndim == 1 else X * S.signs[:, None]


def whiten(B, T):
    """Return ``B @ inv(T)`` for an upper triangular ``T`` (the R factor of ``S @ B``)."""
    B = np.asarray(B, dtype=float)
    T = np.asarray(T, dtype=float)
    if B.ndim != 2 or T.shape != (B.shape[1], B.shape[1]):
        raise ArgumentError(f"shape mismatch: B {B.shape}, T {T.shape}")
    diag = np.abs(np.diag(T))
    small = np.flatnonzero(diag <= RANK_TOL * max(diag.max(initial=0.0), np.finfo(float).tiny))
    if small.size:
        raise SingularMatrixError(int(small[0]), f"cannot whiten: T is singular at column {small[0]}")
    return sla.solve_triangular(T, B.T, trans="T", lower=False).T


def distortion(S, B):
    """Exact distortion of ``S`` on ``range(B)`` from the singular values of ``S @ Q``."""
    Q, _ = np.linalg.qr(np.asarray(B, dtype=float))
    sigma = np.linalg.svd(apply(S, Q), compute_uv=False)
    return float(max(sigma[0] - 1.0, 1.0 - sigma[-1]))


def sampled_distortion(S, B, samples=200, seed=0):
    """Monte Carlo distortion: max of ``| ||S B y|| / ||B y|| - 1 |`` over random ``y``."""
    B = np.asarray(B, dtype=float)
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((B.shape[1], samples))
    BY = B @ Y
    ratio = np.linalg.norm(apply(S, BY), axis=0) / np.linalg.norm(BY, axis=0)
    return float(np.max(np.abs(ratio - 1.0)))
