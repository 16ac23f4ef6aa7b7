"""Sketched Rayleigh-Ritz.

Given a basis ``B`` and the reduced matrix ``AB``, the sketched problem uses
``C = S B`` and ``D = S A B`` from one shared embedding. With ``C = U T`` the
projected matrix is ``M = T^-1 U^T D`` and each eigenpair ``(theta, y)`` of
``M`` comes with the cheap residual estimate
``||D y - theta C y|| / ||C y||``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import KrylovBasis
from .errors import (
    ArgumentError,
    BreakdownError,
    ConditioningError,
    ConditioningWarning,
    SingularMatrixError,
)
from .kernels import (
    RANK_TOL,
    cond_estimate,
    dense_eig,
    householder_qr,
    solve_upper_triangular,
    truncated_svd,
)
from .operators import as_operator, matmat
from .sketch import apply, apply_adjoint, make_embedding, whiten

__all__ = [
    "EigenPairEstimate",
    "RrResult",
    "SrrConfig",
    "SrrResult",
    "lowrank_approx",
    "rr_baseline",
    "sketch_gep",
    "srr",
    "srr_stabilized",
    "symmetric_postprocess",
]

STABILIZE = ("off", "auto", "on")


@dataclass
class SrrConfig:
    """Options for sketched Rayleigh-Ritz.

    ``tau`` is relative: a pair is accepted when its residual estimate is
    below ``tau * max|theta|``.
    """

    sketch_dim: int = None
    embedding: str = "trig"
    seed: int = 0
    tau: float = 1e-6
    cond_tol: float = 1e14
    stabilize: str = "auto"
    symmetric: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ArgumentError(f"tau must be positive, got {self.tau}")
        if not self.cond_tol > 1:
            raise ArgumentError(f"cond_tol must exceed 1, got {self.cond_tol}")
        if self.stabilize not in STABILIZE:
            raise ArgumentError(f"stabilize must be one of {STABILIZE}, got {self.stabilize!r}")

    def embedding_dim(self, n, d):
        s = 4 * d if self.sketch_dim is None else int(self.sketch_dim)
        if s < min(2 * d, n):
            raise ArgumentError(f"sketch dimension {s} is below 2d = {2 * d}")
        return min(s, n)


@dataclass
class EigenPairEstimate:
    theta: complex
    y: np.ndarray
    r_est: float
    x: np.ndarray = None


@dataclass
class SrrResult:
    pairs: list
    accepted: list
    cond: float
    stabilized: bool = False
    rank: int = None
    M: np.ndarray = None
    C: np.ndarray = field(default=None, repr=False)
    D: np.ndarray = field(default=None, repr=False)
    B: np.ndarray = field(default=None, repr=False)
    tau: float = 1e-6

    @property
    def thetas(self):
        return np.array([p.theta for p in self.pairs])

    @property
    def accepted_pairs(self):
        return [self.pairs[i] for i in self.accepted]

    @property
    def accepted_thetas(self):
        return np.array([self.pairs[i].theta for i in self.accepted])


def _residual_estimates(C, D, theta, Y):
    CY = C @ Y
    R = D @ Y - CY * theta
    denom = np.linalg.norm(CY, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.linalg.norm(R, axis=0) / denom
    return np.where(denom > 0, est, np.inf)


def _finish(theta, Y, C, D, B, config, **info):
    r_est = _residual_estimates(C, D, theta, Y)
    pairs = [EigenPairEstimate(complex(t), Y[:, i], float(r_est[i])) for i, t in enumerate(theta)]
    result = SrrResult(pairs, [], C=C, D=D, B=B, tau=config.tau, **info)
    _accept(result)
    if config.symmetric:
        result = symmetric_postprocess(result)
    return result


def _accept(result):
    """Filter by the relative residual cutoff and assemble accepted eigenvectors."""
    thetas = result.thetas
    scale = np.max(np.abs(thetas)) if thetas.size else 0.0
    cutoff = result.tau * (scale if scale > 0 else 1.0)
    result.accepted = [i for i, p in enumerate(result.pairs) if p.r_est < cutoff]
    for i in result.accepted:
        p = result.pairs[i]
        if result.B is not None:
            x = result.B @ p.y
            nx = np.linalg.norm(x)
            p.x = x / nx if nx > 0 else x


def _basis_arrays(basis):
    if isinstance(basis, KrylovBasis):
        return basis.B, basis.AB
    B, AB = basis
    return np.asarray(B, dtype=float), np.asarray(AB, dtype=float)


def _sketch_pair(B, AB, config):
    n, d = B.shape
    if AB.shape != B.shape:
        raise ArgumentError(f"B and AB shapes differ: {B.shape} vs {AB.shape}")
    S = make_embedding(config.embedding, n, config.embedding_dim(n, d), config.seed, d=2 * d)
    return apply(S, B), apply(S, AB)


def _projected(C):
    U, T = householder_qr(C)
    return U, T, cond_estimate(T)


def srr(basis, config=None):
    """Sketched Rayleigh-Ritz on ``basis`` (a :class:`KrylovBasis` or a ``(B, AB)`` pair).

    When ``cond(S B)`` exceeds ``config.cond_tol`` the ``stabilize`` option
    decides: ``auto`` switches to :func:`srr_stabilized`, ``off`` raises
    :class:`ConditioningError`. ``stabilize = "on"`` always takes the
    truncated path.
    """
    config = SrrConfig() if config is None else config
    B, AB = _basis_arrays(basis)
    C, D = _sketch_pair(B, AB, config)
    if config.stabilize == "on":
        return _stabilized(C, D, B, config)
    U, T, cond = _projected(C)
    if cond > config.cond_tol:
        if config.stabilize == "auto":
            return _stabilized(C, D, B, config, cond=cond)
        raise ConditioningError(cond)
    M = solve_upper_triangular(T, U.T @ D)
    eig = dense_eig(M)
    return _finish(eig.values, eig.vectors, C, D, B, config, cond=cond, rank=B.shape[1], M=M)


def _stabilized(C, D, B, config, cond=None):
    svd = truncated_svd(C, config.cond_tol)
    if svd.rank == 0:
        raise BreakdownError("sketched basis is numerically zero; nothing to extract")
    if cond is None:
        cond = cond_estimate(C)
    # Sigma^-1 (U^T D V) z = theta z, then y = V z
    K = (svd.U.T @ D @ svd.V) / svd.sigma[:, None]
    eig = dense_eig(K)
    Y = svd.V @ eig.vectors
    return _finish(eig.values, Y, C, D, B, config, cond=cond, stabilized=True, rank=svd.rank, M=K)


def srr_stabilized(basis, config=None):
    """Sketched Rayleigh-Ritz regularized by truncating the SVD of ``S B``.

    Singular values below ``sigma_1 / cond_tol`` are dropped, leaving rank
    ``r``; the remaining problem ``Sigma^-1 (U^T S A B V) z = theta z`` is
    solved and ``y = V z`` mapped back through ``B``.
    """
    config = SrrConfig() if config is None else config
    B, AB = _basis_arrays(basis)
    C, D = _sketch_pair(B, AB, config)
    return _stabilized(C, D, B, config)


def symmetric_postprocess(result):
    """Keep real parts of eigenvalues and coefficient vectors, then re-estimate and re-filter.

    A conjugate pair collapses to a single real pair.
    """
    seen = []
    pairs = []
    for p in result.pairs:
        theta = float(np.real(p.theta))
        y = np.real(p.y)
        if not np.any(y):
            y = np.imag(p.y)
        if p.theta.imag != 0 and any(
            abs(theta - t) <= 1e-12 * max(1.0, abs(t)) and q for t, q in seen
        ):
            continue
        seen.append((theta, p.theta.imag != 0))
        pairs.append(EigenPairEstimate(theta, y, 0.0))
    order = np.argsort([-p.theta for p in pairs], kind="stable")
    pairs = [pairs[i] for i in order]
    if pairs:
        Y = np.column_stack([p.y for p in pairs])
        est = _residual_estimates(result.C, result.D, np.array([p.theta for p in pairs]), Y)
        for p, e in zip(pairs, est):
            p.r_est = float(e)
    out = SrrResult(pairs, [], result.cond, result.stabilized, result.rank, result.M,
                    result.C, result.D, result.B, result.tau)
    _accept(out)
    for i in out.accepted:
        out.pairs[i].x = np.real(out.pairs[i].x)
    return out


@dataclass
class RrResult:
    thetas: np.ndarray
    X: np.ndarray
    residuals: np.ndarray
    Q: np.ndarray = field(default=None, repr=False)


def rr_baseline(op, B):
    """Classical Rayleigh-Ritz: orthonormalize ``B``, form ``Q^T A Q``, solve exactly.

    Residuals ``||A x - theta x|| / ||x||`` are computed with the operator.
    """
    op = as_operator(op)
    B = B.B if isinstance(B, KrylovBasis) else np.asarray(B, dtype=float)
    Q, R = householder_qr(B)
    norms = np.linalg.norm(B, axis=0)
    if np.any(np.diag(R) <= RANK_TOL * np.maximum(norms, np.finfo(float).tiny)):
        raise ArgumentError("basis is numerically rank deficient")
    AQ = matmat(op, Q)
    eig = dense_eig(Q.T @ AQ)
    X = Q @ eig.vectors
    R = AQ @ eig.vectors - X * eig.values
    res = np.linalg.norm(R, axis=0) / np.linalg.norm(X, axis=0)
    return RrResult(eig.values, X, res, Q)


def sketch_gep(HB, JB, B=None, config=None):
    """Sketched generalized eigenproblem ``H x = theta J x`` over ``range(B)``.

    Uses ``M = (S J B)^+ (S H B)`` via a QR of ``S J B``; pass ``B`` to get
    eigenvectors ``B y`` for accepted pairs.
    """
    config = SrrConfig() if config is None else config
    HB = np.asarray(HB, dtype=float)
    JB = np.asarray(JB, dtype=float)
    C, D = _sketch_pair(JB, HB, config)
    U, T, cond = _projected(C)
    if cond > config.cond_tol:
        raise ConditioningError(cond)
    M = solve_upper_triangular(T, U.T @ D)
    eig = dense_eig(M)
    B = None if B is None else np.asarray(B, dtype=float)
    return _finish(eig.values, eig.vectors, C, D, B, config, cond=cond, rank=HB.shape[1], M=M)


def lowrank_approx(A, B, sketch_dim=None, embedding="trig", seed=0):
    """Sketched low-rank approximation ``A ~ F @ G`` adapted to ``range(A B)``.

    With ``S A B = U T`` the factors are ``F = (A B) T^-1`` and
    ``G = U^T (S A)``, which equals ``(A B)(S A B)^+ (S A)`` without forming a
    pseudoinverse. ``S A`` is computed through transposed products. If ``T``
    is singular, a truncated SVD of ``S A B`` is used instead and a
    :class:`ConditioningWarning` is issued.
    """
    op = as_operator(A)
    B = np.asarray(B, dtype=float)
    m = op.shape[0]
    d = B.shape[1]
    s = min(2 * d if sketch_dim is None else int(sketch_dim), m)
    if s < d:
        raise ArgumentError(f"sketch dimension {s} below basis dimension {d}")
    S = make_embedding(embedding, m, s, seed, d=d)
    AB = matmat(op, B)
    SAB = apply(S, AB)
    St = apply_adjoint(S, np.eye(s))
    SA = np.asarray(op.rmatmat(St), dtype=float).T
    U, T = householder_qr(SAB)
    try:
        return whiten(AB, T), U.T @ SA
    except SingularMatrixError:
        pass
    svd = truncated_svd(SAB, 1e14)
    warnings.warn(f"sketched range is rank deficient; truncated to rank {svd.rank}",
                  ConditioningWarning, stacklevel=2)
    F = (AB @ svd.V) / svd.sigma
    return F, svd.U.T @ SA

