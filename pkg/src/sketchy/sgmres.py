"""Sketched GMRES.

The solver replaces the GMRES least-squares problem ``min ||A B y - r0||`` by
its sketch ``min ||S (A B y - r0)||``. With ``S A B = U T`` the solution is
``y = T^-1 U^T S r0`` and ``||(I - U U^T) S r0||`` estimates the residual
norm without any length-``n`` work.

Two drivers are provided: :func:`sgmres_solve` builds the whole basis and
solves once, :func:`sgmres_iterative` grows the basis column by column and
monitors the conditioning of ``T``, restarting or whitening when it blows up.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import basis as kb
from .errors import (
    ArgumentError,
    ConditioningWarning,
    SingularMatrixError,
    StagnationWarning,
)
from .kernels import SketchedQr, cond_estimate, householder_qr, solve_upper_triangular
from .operators import as_operator, matvec
from .sketch import apply, make_embedding, whiten

__all__ = [
    "GmresResult",
    "SgmresConfig",
    "SgmresResult",
    "adaptive_restart",
    "arnoldi",
    "basis_steps",
    "build_basis",
    "gmres_baseline",
    "refine",
    "sgmres_iterative",
    "sgmres_solve",
    "sketched_lsq",
]

RESTART_POLICIES = ("none", "adaptive", "whiten")
BASES = ("arnoldi", "lanczos", "monomial", "chebyshev", "newton")


@dataclass
class SgmresConfig:
    """Options for the sketched GMRES drivers.

    ``d_max`` bounds the basis dimension of one cycle; ``max_iter`` bounds the
    total number of basis columns over all cycles and defaults to ``d_max``.
    ``tol`` is relative to ``||S r0||``; ``tol = 0`` runs to the budget.
    """

    d_max: int = 50
    basis: str = "arnoldi"
    k: int = 2
    box: kb.SpectralBox = None
    shifts: np.ndarray = None
    embedding: str = "trig"
    seed: int = 0
    sketch_dim: int = None
    restart: str = "adaptive"
    cond_tol: float = 1e14
    tol: float = 0.0
    refine: bool = False
    max_iter: int = None
    max_restarts: int = 20
    cond_every: int = 32
    true_res_every: int = 0

    def __post_init__(self):
        if self.d_max < 1:
            raise ArgumentError(f"d_max must be positive, got {self.d_max}")
        if self.basis not in BASES:
            raise ArgumentError(f"unknown basis {self.basis!r}; expected one of {BASES}")
        if self.restart not in RESTART_POLICIES:
            raise ArgumentError(f"unknown restart policy {self.restart!r}")
        if not self.cond_tol > 1:
            raise ArgumentError(f"cond_tol must exceed 1, got {self.cond_tol}")
        if self.tol < 0:
            raise ArgumentError(f"tol must be nonnegative, got {self.tol}")
        if self.k < 1:
            raise ArgumentError(f"k must be positive, got {self.k}")

    def embedding_dim(self, n):
        s = 2 * self.d_max + 1 if self.sketch_dim is None else int(self.sketch_dim)
        return min(s, n)


@dataclass
class SgmresResult:
    x: np.ndarray
    y: np.ndarray
    r_est: float
    true_residual: float
    iterations: int
    restarts: int = 0
    whitenings: int = 0
    history: list = field(default_factory=list)  # rows (r_est, cond, true_res, seconds)
    reliable: bool = True
    cond: float = 1.0
    breakdown: bool = False
    warnings: list = field(default_factory=list)

    @property
    def r_est_history(self):
        return np.array([row[0] for row in self.history])


def _warn(result, category, message):
    result.warnings.append(message)
    warnings.warn(message, category, stacklevel=3)


def sketched_lsq(U, T, g):
    """Solve the sketched least-squares problem from the factors ``S A B = U T``.

    Returns ``(y, r_est)`` with ``y = T^-1 U^T g`` and
    ``r_est = ||g - U U^T g||``.
    """
    U = np.asarray(U, dtype=float)
    g = np.asarray(g, dtype=float)
    c = U.T @ g
    y = solve_upper_triangular(T, c)
    return y, float(np.linalg.norm(g - U @ c))


def _lstsq_fallback(T, c):
    """Minimum-norm solution of ``T y = c`` for a singular triangular ``T``."""
    return sla.lstsq(T, c, cond=None, lapack_driver="gelsd")[0]


def _default_shifts(op, count, seed):
    if count <= 0:
        return np.zeros(0, dtype=complex)
    m = int(min(max(count, 2), op.shape[0], 100))
    ritz = kb.leja_order(kb.ritz_values(op, m, seed))
    shifts = np.resize(ritz, count)
    # a conjugate pair cut at the end is replaced by its real part
    if shifts[-1].imag > 0:
        shifts[-1] = shifts[-1].real
    return shifts


def basis_steps(op, r, config, m_r=None):
    """Column generator for the basis selected by ``config``."""
    if config.basis == "arnoldi":
        return kb.arnoldi_steps(op, r, config.k, m_r)
    if config.basis == "lanczos":
        return kb.arnoldi_steps(op, r, 2, m_r)
    if config.basis == "monomial":
        return kb.monomial_steps(op, r, m_r)
    if config.basis == "chebyshev":
        box = config.box if config.box is not None else kb.estimate_spectral_box(op, seed=config.seed)
        return kb.chebyshev_steps(op, r, box, m_r)
    shifts = config.shifts
    if shifts is None:
        shifts = _default_shifts(op, config.d_max - 1, config.seed)
    return kb.newton_steps(op, r, shifts, m_r)


def build_basis(op, r, d, config):
    return kb._collect(basis_steps(as_operator(op), r, config), d, config.basis)


def _initial_residual(op, f, x0):
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.shape[0] != op.shape[0] or op.shape[0] != op.shape[1]:
        raise ArgumentError(f"operator of shape {op.shape} incompatible with right-hand side of length {f.size}")
    x0 = np.zeros_like(f) if x0 is None else np.asarray(x0, dtype=float).reshape(-1).copy()
    if x0.shape != f.shape:
        raise ArgumentError(f"initial guess has length {x0.size}, expected {f.size}")
    return f, x0, f - matvec(op, x0)


def sgmres_solve(op, f, x0=None, config=None):
    """Batch sketched GMRES: build ``d_max`` basis columns, sketch and solve once.

    If ``T`` turns out to be worse conditioned than ``config.cond_tol`` and
    the restart policy is not ``"none"``, the incremental driver is used
    instead. With policy ``"none"`` the result is returned with a
    :class:`ConditioningWarning` and ``reliable = False``.
    """
    config = SgmresConfig() if config is None else config
    op = as_operator(op)
    f, x0, r0 = _initial_residual(op, f, x0)
    n = f.size
    if config.d_max > n:
        raise ArgumentError(f"d_max = {config.d_max} exceeds n = {n}")
    start = time.perf_counter()
    beta = np.linalg.norm(r0)
    if beta == 0:
        return SgmresResult(x0, np.zeros(0), 0.0, 0.0, 0)

    B = build_basis(op, r0, config.d_max, config)
    S = make_embedding(config.embedding, n, config.embedding_dim(n), config.seed, d=config.d_max)
    SAB = apply(S, B.AB)
    g = apply(S, r0)
    U, T = householder_qr(SAB)
    cond = cond_estimate(T)
    if cond > config.cond_tol and config.restart != "none":
        return sgmres_iterative(op, f, x0, config)

    c = U.T @ g
    result = SgmresResult(x0, None, 0.0, 0.0, B.d, cond=cond, breakdown=B.breakdown)
    if cond > config.cond_tol:
        result.reliable = False
        _warn(result, ConditioningWarning,
              f"sketched basis condition number {cond:.3e} exceeds tolerance {config.cond_tol:.1e}; "
              "solution is unreliable")
        y = _lstsq_fallback(T, c)
    else:
        y = solve_upper_triangular(T, c)
    partial = g[:, None] - np.cumsum(U * c, axis=1)
    r_hist = np.linalg.norm(partial, axis=0)
    x = x0 + B.B @ y
    elapsed = time.perf_counter() - start
    for j in range(B.d):
        cj = cond if j == B.d - 1 else np.nan
        result.history.append((float(r_hist[j]), cj, np.nan, elapsed))
    result.x = x
    result.y = y
    result.r_est = float(r_hist[-1])
    result.true_residual = float(np.linalg.norm(f - matvec(op, x)))
    if config.refine and result.reliable:
        result.x, _ = refine(op, f, x, B.B, B.AB, T)
        result.true_residual = float(np.linalg.norm(f - matvec(op, result.x)))
    result.history[-1] = result.history[-1][:2] + (result.true_residual, elapsed)
    return result


class _Cycle:
    """Basis columns, sketches and incremental QR of one restart cycle."""

    def __init__(self, S, r, steps):
        self.S = S
        self.qr = SketchedQr(S.s, capacity=32)
        self.g = apply(S, r)
        self.gq = self.g.copy()  # Q^T g with all current reflectors applied
        self.B = []
        self.AB = []
        self.steps = steps
        self.cond_ok = 0  # leading columns known to satisfy the tolerance

    @property
    def j(self):
        return self.qr.ncols

    def append(self, b, m):
        self.B.append(b)
        self.AB.append(m)
        self.qr.append(apply(self.S, m))
        j = self.qr.ncols - 1
        self.gq = self.qr.apply_qt(self.gq, start=j, stop=j + 1)

    def r_est(self, j=None):
        j = self.j if j is None else j
        if j == self.j:
            return float(np.linalg.norm(self.gq[j:]))
        return float(np.linalg.norm(self.qr.apply_qt(self.g, stop=j)[j:]))

    def solve(self, j=None):
        j = self.j if j is None else j
        c = self.qr.apply_qt(self.g, stop=j)[:j] if j < self.j else self.gq[:j]
        T = self.qr.T[:j, :j]
        try:
            return solve_upper_triangular(T, c)
        except SingularMatrixError:
            return _lstsq_fallback(T, c)

    def cond(self, j=None):
        j = self.j if j is None else j
        return cond_estimate(self.qr.T[:j, :j])

    def diag_ratio(self):
        dg = np.abs(np.diag(self.qr.T))
        return np.inf if dg.min() == 0 else float(dg.max() / dg.min())

    def first_bad(self, tol):
        """Smallest ``j`` with ``cond(T_j) > tol``; conditioning of leading blocks is monotone."""
        lo, hi = self.cond_ok, self.j
        T = self.qr.T
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if cond_estimate(T[:mid, :mid]) > tol:
                hi = mid
            else:
                lo = mid
        return hi


def adaptive_restart(op, f, x, cycle, j_bad, config):
    """Restart from the solution of the last well-conditioned step.

    Returns ``(x_new, r_new)`` where ``x_new`` adds the correction from the
    first ``j_bad - 1`` columns of ``cycle`` and ``r_new = f - A x_new`` is the
    explicit residual used to seed the next basis.
    """
    j = max(j_bad - 1, 1)
    y = cycle.solve(j)
    x_new = x + np.column_stack(cycle.B[:j]) @ y
    return x_new, f - matvec(op, x_new)


def _whiten_cycle(op, cycle, j_keep, config):
    """Replace the first ``j_keep`` columns by their whitened versions and reseed the generator."""
    T = cycle.qr.T[:j_keep, :j_keep]
    B = whiten(np.column_stack(cycle.B[:j_keep]), T)
    AB = whiten(np.column_stack(cycle.AB[:j_keep]), T)
    fresh = _Cycle(cycle.S, np.zeros(cycle.S.n), None)
    fresh.g = cycle.g
    fresh.gq = cycle.g.copy()
    for i in range(j_keep):
        fresh.append(B[:, i], AB[:, i])
    fresh.cond_ok = j_keep
    # continue the recurrence from the newest direction
    nb = np.linalg.norm(B[:, -1])
    steps = basis_steps(op, B[:, -1] / nb, config, m_r=AB[:, -1] / nb)
    next(steps)
    fresh.steps = steps
    return fresh


def sgmres_iterative(op, f, x0=None, config=None):
    """Incremental sketched GMRES with conditioning control.

    One embedding with ``s = 2 d_max + 1`` is drawn up front. Each new basis
    column is sketched and appended to a Householder QR of ``S A B``; the
    residual estimate comes for free from the transformed right-hand side.
    When ``cond(T_j)`` first exceeds ``cond_tol`` the policy decides what
    happens: ``adaptive`` restarts from the step ``j - 1`` solution,
    ``whiten`` replaces the basis by ``B T^-1`` and keeps going, ``none``
    carries on and flags the result as unreliable.
    """
    config = SgmresConfig() if config is None else config
    op = as_operator(op)
    f, x, r = _initial_residual(op, f, x0)
    n = f.size
    if config.d_max > n:
        raise ArgumentError(f"d_max = {config.d_max} exceeds n = {n}")
    budget = config.d_max if config.max_iter is None else int(config.max_iter)
    start = time.perf_counter()
    result = SgmresResult(x, np.zeros(0), 0.0, 0.0, 0)
    if np.linalg.norm(r) == 0:
        return result

    S = make_embedding(config.embedding, n, config.embedding_dim(n), config.seed, d=config.d_max)
    target = config.tol * np.linalg.norm(apply(S, r))
    cycle = _Cycle(S, r, basis_steps(op, r, config))
    restart_res = [np.linalg.norm(r)]
    best = (restart_res[0], x)
    stalls = 0
    total = 0
    done = False
    while not done:
        try:
            b, m = next(cycle.steps)
        except StopIteration:
            result.breakdown = True
            break
        cycle.append(b, m)
        total += 1
        j = cycle.j

        cond = np.nan
        bad = cycle.diag_ratio() > config.cond_tol
        if not bad and (j % config.cond_every == 0 or j == config.d_max or total == budget):
            cond = cycle.cond()
            bad = cond > config.cond_tol
            if not bad:
                cycle.cond_ok = j
        true_res = np.nan
        if config.true_res_every and total % config.true_res_every == 0:
            xj = x + np.column_stack(cycle.B) @ cycle.solve()
            true_res = float(np.linalg.norm(f - matvec(op, xj)))
        result.history.append((cycle.r_est(), cond, true_res, time.perf_counter() - start))

        if bad and config.restart != "none":
            j_bad = cycle.first_bad(config.cond_tol)
            if config.restart == "whiten" and j_bad > 1:
                cycle = _whiten_cycle(op, cycle, j_bad - 1, config)
                result.whitenings += 1
                continue
            x, r = adaptive_restart(op, f, x, cycle, j_bad, config)
            result.restarts += 1
            res = float(np.linalg.norm(r))
            stalls = stalls + 1 if res > 0.99 * restart_res[-1] else 0
            restart_res.append(res)
            if res < best[0]:
                best = (res, x)
            if res == 0 or stalls >= 2 or result.restarts > config.max_restarts or total >= budget:
                if stalls >= 2:
                    x = best[1]
                    r = f - matvec(op, x)
                    _warn(result, StagnationWarning,
                          f"restarts stopped reducing the residual (best {best[0]:.3e}); returning best iterate")
                cycle = _Cycle(S, r, None)
                break
            cycle = _Cycle(S, r, basis_steps(op, r, config))
            continue

        if cycle.r_est() <= target or total >= budget or j >= min(config.d_max, S.s):
            done = True

    result.cond = cycle.cond() if cycle.j else 1.0
    if cycle.j:
        y = cycle.solve()
        x = x + np.column_stack(cycle.B) @ y
        result.y = y
        result.r_est = cycle.r_est()
    else:
        result.r_est = float(np.linalg.norm(apply(S, r)))
    if result.cond > config.cond_tol:
        result.reliable = False
        _warn(result, ConditioningWarning,
              f"sketched basis condition number {result.cond:.3e} exceeds tolerance "
              f"{config.cond_tol:.1e}; solution is unreliable")
    if config.refine and result.reliable and cycle.j:
        x, _ = refine(op, f, x, np.column_stack(cycle.B), np.column_stack(cycle.AB), cycle.qr.T)
    result.x = x
    result.iterations = total
    result.true_residual = float(np.linalg.norm(f - matvec(op, x)))
    if result.history:
        last = result.history[-1]
        result.history[-1] = (last[0], result.cond, result.true_residual, last[3])
    return result


def refine(op, f, x, B, AB, T, max_iter=50):
    """Polish ``x`` by LSQR on ``min ||A B dy - r||`` right-preconditioned by ``T^-1``.

    ``T`` is the triangular factor of ``S A B``, so ``A B T^-1`` is nearly
    orthonormal and LSQR converges in a handful of steps. Returns the better
    of the input and refined iterates together with the LSQR iteration count.
    """
    op = as_operator(op)
    B = np.asarray(B, dtype=float)
    AB = np.asarray(AB, dtype=float)
    T = np.asarray(T, dtype=float)
    d = B.shape[1]
    r = f - matvec(op, x)
    rnorm = np.linalg.norm(r)
    if rnorm == 0:
        return x, 0

    def mv(z):
        return AB @ solve_upper_triangular(T, np.ravel(z))

    def rmv(u):
        return sla.solve_triangular(T, AB.T @ np.ravel(u), trans="T")

    P = spla.LinearOperator((AB.shape[0], d), matvec=mv, rmatvec=rmv, dtype=float)
    z, _, itn = spla.lsqr(P, r, atol=1e-16, btol=1e-16, iter_lim=max_iter)[:3]
    x_new = x + B @ solve_upper_triangular(T, z)
    if np.linalg.norm(f - matvec(op, x_new)) <= rnorm:
        return x_new, int(itn)
    return x, int(itn)


@dataclass
class GmresResult:
    x: np.ndarray
    residuals: np.ndarray  # residual norm after each step
    iterations: int
    true_residual: float
    breakdown: bool = False


def arnoldi(op, r, d):
    """Full Arnoldi with two Gram-Schmidt passes.

    Returns ``(Q, H, j)`` with ``Q`` of shape ``(n, d+1)``, ``H`` of shape
    ``(d+1, d)`` and ``j`` the number of completed steps (``< d`` on breakdown).
    """
    op = as_operator(op)
    n = op.shape[0]
    Q = np.zeros((n, d + 1))
    H = np.zeros((d + 1, d))
    Q[:, 0] = kb._start(r)
    for j in range(d):
        w = matvec(op, Q[:, j])
        nrm = np.linalg.norm(w)
        for _ in range(2):
            h = Q[:, : j + 1].T @ w
            w -= Q[:, : j + 1] @ h
            H[: j + 1, j] += h
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] <= kb.BREAKDOWN_TOL * max(nrm, np.finfo(float).tiny):
            H[j + 1, j] = 0.0
            return Q, H, j + 1
        Q[:, j + 1] = w / H[j + 1, j]
    return Q, H, d


def gmres_baseline(op, f, x0=None, d=50):
    """Classical GMRES over ``K_d(A, r0)``: full Arnoldi plus Givens rotations."""
    op = as_operator(op)
    f, x0, r0 = _initial_residual(op, f, x0)
    if d > f.size:
        raise ArgumentError(f"d = {d} exceeds n = {f.size}")
    beta = np.linalg.norm(r0)
    if beta == 0:
        return GmresResult(x0, np.zeros(0), 0, 0.0)
    Q, H, steps = arnoldi(op, r0, d)
    R = H[: steps + 1, :steps].copy()
    rhs = np.zeros(steps + 1)
    rhs[0] = beta
    residuals = np.zeros(steps)
    for j in range(steps):
        a, b = R[j, j], R[j + 1, j]
        rho = np.hypot(a, b)
        cs, sn = (1.0, 0.0) if rho == 0 else (a / rho, b / rho)
        G = np.array([[cs, sn], [-sn, cs]])
        R[j : j + 2, j:] = G @ R[j : j + 2, j:]
        rhs[j : j + 2] = G @ rhs[j : j + 2]
        residuals[j] = abs(rhs[j + 1])
    y = solve_upper_triangular(R[:steps, :steps], rhs[:steps])
    x = x0 + Q[:, :steps] @ y
    true_res = float(np.linalg.norm(f - matvec(op, x)))
    return GmresResult(x, residuals, steps, true_res, breakdown=steps < d)
