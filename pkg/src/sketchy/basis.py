"""Fast (block) Krylov basis constructions.

Every construction returns the basis ``B`` together with the reduced matrix
``AB``; columns of ``AB`` are the raw products ``A @ b_j``. Single-vector
recurrences are written as generators yielding ``(b_j, A b_j)`` so that the
iterative solvers can consume columns as they are produced.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, BreakdownError, DegenerateBoxError
from .kernels import RANK_TOL, householder_qr
from .operators import as_operator, matmat, matvec

__all__ = [
    "KrylovBasis",
    "SpectralBox",
    "arnoldi_steps",
    "block_basis",
    "chebyshev_basis",
    "chebyshev_steps",
    "estimate_spectral_box",
    "lanczos",
    "leja_order",
    "monomial_basis",
    "monomial_steps",
    "newton_basis",
    "newton_steps",
    "partial_arnoldi",
    "ritz_values",
]

BREAKDOWN_TOL = 1e-14


@dataclass
class KrylovBasis:
    B: np.ndarray
    AB: np.ndarray
    method: str
    block_size: int = 1
    depth: int = 0
    breakdown: bool = False

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def d(self):
        return self.B.shape[1]

    @property
    def norms(self):
        return np.linalg.norm(self.B, axis=0)


@dataclass(frozen=True)
class SpectralBox:
    """Axis-aligned rectangle ``[c - dx, c + dx] x [-dy, dy]`` in the complex plane."""

    c: float
    dx: float
    dy: float = 0.0

    def __post_init__(self):
        if self.dx < 0 or self.dy < 0:
            raise ArgumentError(f"box half-widths must be nonnegative, got {self.dx}, {self.dy}")
        if self.rho <= 0:
            raise ArgumentError("box must have positive extent")

    @property
    def rho(self):
        return max(self.dx, self.dy)

    def contains(self, z, rtol=0.0):
        z = np.asarray(z)
        slack = rtol * self.rho
        return (np.abs(z.real - self.c) <= self.dx + slack) & (np.abs(z.imag) <= self.dy + slack)


def _start(r):
    r = np.asarray(r, dtype=float).reshape(-1)
    nrm = np.linalg.norm(r)
    if nrm == 0 or not np.isfinite(nrm):
        raise ArgumentError("starting vector must be nonzero and finite")
    return r / nrm


def _collect(steps, d, method, **meta):
    cols, prods = [], []
    for b, m in steps:
        cols.append(b)
        prods.append(m)
        if len(cols) == d:
            break
    breakdown = len(cols) < d
    return KrylovBasis(np.column_stack(cols), np.column_stack(prods), method,
                       depth=len(cols), breakdown=breakdown, **meta)


def arnoldi_steps(op, r, k, m_r=None):
    """Generate ``(b_j, A b_j)`` by Arnoldi with k-partial orthogonalization.

    Each new vector is orthogonalized (two classical Gram-Schmidt passes)
    against the ``k`` most recent basis vectors only. Passing ``m_r = A @ r``
    skips the first product. The generator stops on breakdown.
    """
    if k < 1:
        raise ArgumentError(f"partial orthogonalization length must be >= 1, got {k}")
    op = as_operator(op)
    b = _start(r)
    m = matvec(op, b) if m_r is None else np.asarray(m_r, dtype=float) / np.linalg.norm(r)
    window = deque([b], maxlen=k)
    yield b, m
    while True:
        W = np.column_stack(window)
        w = m - W @ (W.T @ m)
        w -= W @ (W.T @ w)
        nw = np.linalg.norm(w)
        if nw <= BREAKDOWN_TOL * np.linalg.norm(m):
            return
        b = w / nw
        m = matvec(op, b)
        window.append(b)
        yield b, m


def partial_arnoldi(op, r, d, k):
    """Krylov basis of dimension ``d`` by Arnoldi with k-partial orthogonalization."""
    if d < 1:
        raise ArgumentError(f"basis dimension must be positive, got {d}")
    return _collect(arnoldi_steps(op, r, k), d, f"arnoldi:{k}")


def lanczos(op, r, d):
    """Lanczos basis for a symmetric operator: partial Arnoldi with ``k = 2``."""
    basis = partial_arnoldi(op, r, d, 2)
    basis.method = "lanczos"
    return basis


def monomial_steps(op, r, m_r=None):
    """Generate the normalized monomial basis ``b_j ~ A^(j-1) r``."""
    op = as_operator(op)
    b = _start(r)
    m = matvec(op, b) if m_r is None else np.asarray(m_r, dtype=float) / np.linalg.norm(r)
    yield b, m
    while True:
        nm = np.linalg.norm(m)
        if not np.isfinite(nm) or np.linalg.norm(m - (b @ m) * b) <= BREAKDOWN_TOL * nm:
            return
        b = m / nm
        m = matvec(op, b)
        yield b, m


def monomial_basis(op, r, d):
    return _collect(monomial_steps(op, r), d, "monomial")


def _check_finite(w, what):
    if not np.all(np.isfinite(w)):
        raise ArgumentError(f"{what} produced non-finite values; try a larger spectral box")


def chebyshev_steps(op, r, box, m_r=None):
    """Generate the shifted and scaled Chebyshev basis for ``box``.

    The three-term recurrence runs on the unnormalized iterates, but only unit
    vectors are stored: the ratio of consecutive scale factors is carried
    along so that the recurrence never overflows or underflows.
    """
    op = as_operator(op)
    c, rho = box.c, box.rho
    gamma = (box.dx**2 - box.dy**2) / (4 * rho)
    b_prev = None
    ratio = 1.0
    b = _start(r)
    m = matvec(op, b) if m_r is None else np.asarray(m_r, dtype=float) / np.linalg.norm(r)
    yield b, m
    while True:
        shifted = m - c * b
        if b_prev is None:
            w = shifted / (2 * rho)
            scale = (np.linalg.norm(m) + abs(c)) / (2 * rho)
        else:
            w = (shifted - (gamma / ratio) * b_prev) / rho
            scale = (np.linalg.norm(m) + abs(c) + abs(gamma / ratio)) / rho
        _check_finite(w, "Chebyshev recurrence")
        nw = np.linalg.norm(w)
        if nw <= BREAKDOWN_TOL * scale:
            return
        b_prev, b, ratio = b, w / nw, nw
        m = matvec(op, b)
        yield b, m


def chebyshev_basis(op, r, d, box):
    """Chebyshev basis of dimension ``d`` adapted to the spectral ``box``."""
    return _collect(chebyshev_steps(op, r, box), d, "chebyshev")


def _validate_shifts(shifts):
    shifts = np.asarray(shifts, dtype=complex).reshape(-1)
    i = 0
    while i < shifts.size:
        z = shifts[i]
        if z.imag != 0:
            tol = 1e-12 * max(1.0, abs(z))
            if i + 1 >= shifts.size or abs(shifts[i + 1] - np.conj(z)) > tol:
                raise ArgumentError(
                    f"complex shift {z} at position {i} must be followed by its conjugate"
                )
            i += 2
        else:
            i += 1
    return shifts


def newton_steps(op, r, shifts, m_r=None):
    """Generate the Newton basis ``b_j ~ (A - theta_(j-1) I) b_(j-1)``.

    A conjugate pair ``(theta, conj(theta))`` is applied over two steps as
    ``A - Re(theta) I`` followed by the real quadratic correction, so the
    iterates stay real.
    """
    op = as_operator(op)
    shifts = _validate_shifts(shifts)
    b_prev = None
    ratio = 1.0
    pending_imag = None
    b = _start(r)
    m = matvec(op, b) if m_r is None else np.asarray(m_r, dtype=float) / np.linalg.norm(r)
    yield b, m
    for theta in shifts:
        if pending_imag is not None:
            # second half of a conjugate pair
            w = m - theta.real * b + (pending_imag**2 / ratio) * b_prev
            scale = np.linalg.norm(m) + abs(theta.real) + pending_imag**2 / ratio
            pending_imag = None
        else:
            w = m - theta.real * b
            scale = np.linalg.norm(m) + abs(theta.real)
            if theta.imag != 0:
                pending_imag = theta.imag
        _check_finite(w, "Newton recurrence")
        nw = np.linalg.norm(w)
        if nw <= BREAKDOWN_TOL * scale:
            return
        b_prev, b, ratio = b, w / nw, nw
        m = matvec(op, b)
        yield b, m


def newton_basis(op, r, shifts, d=None):
    """Newton basis with the given shifts; ``d`` defaults to ``len(shifts) + 1``."""
    shifts = np.asarray(shifts, dtype=complex).reshape(-1)
    d = shifts.size + 1 if d is None else d
    if shifts.size < d - 1:
        raise ArgumentError(f"need at least {d - 1} shifts for dimension {d}, got {shifts.size}")
    return _collect(newton_steps(op, r, shifts[: d - 1] if d > 1 else shifts[:0]), d, "newton")


def leja_order(points):
    """Order points by the Leja rule, keeping conjugate pairs adjacent (positive imag first)."""
    pts = list(np.asarray(points, dtype=complex).reshape(-1))
    out = []
    if not pts:
        return np.array(out, dtype=complex)

    def take(idx):
        z = pts.pop(idx)
        partner = np.conj(z)
        if z.imag < 0:
            z = partner
        out.append(z)
        if z.imag != 0:
            # drop the partner from the pool and emit it next
            j = int(np.argmin([abs(p - partner) for p in pts])) if pts else None
            if j is not None and abs(pts[j] - partner) <= 1e-8 * max(1.0, abs(z)):
                pts.pop(j)
            out.append(np.conj(z))

    take(int(np.argmax(np.abs(pts))))
    while pts:
        chosen = np.array(out)
        score = [np.sum(np.log(np.abs(p - chosen) + 1e-300)) for p in pts]
        take(int(np.argmax(score)))
    return np.array(out, dtype=complex)


def ritz_values(op, m=20, seed=0):
    """Eigenvalues of the Hessenberg matrix from ``m`` steps of full Arnoldi."""
    if m < 2:
        raise ArgumentError(f"need at least 2 Arnoldi steps, got {m}")
    op = as_operator(op)
    n = op.shape[0]
    q = np.random.default_rng(seed).standard_normal(n)
    Q = np.zeros((n, m + 1))
    H = np.zeros((m + 1, m))
    Q[:, 0] = q / np.linalg.norm(q)
    steps = m
    for j in range(m):
        w = matvec(op, Q[:, j])
        nrm = np.linalg.norm(w)
        for _ in range(2):
            h = Q[:, : j + 1].T @ w
            w -= Q[:, : j + 1] @ h
            H[: j + 1, j] += h
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] <= BREAKDOWN_TOL * max(nrm, np.finfo(float).tiny):
            steps = j + 1
            break
        Q[:, j + 1] = w / H[j + 1, j]
    if steps < 2:
        raise DegenerateBoxError("Arnoldi broke down before two steps; spectrum estimate is degenerate")
    return np.linalg.eigvals(H[:steps, :steps])


def estimate_spectral_box(op, m=20, seed=0, inflate=0.1):
    """Bounding box of ``m``-step Ritz values, with half-widths inflated by ``inflate``."""
    theta = ritz_values(op, m, seed)
    lo, hi = theta.real.min(), theta.real.max()
    dx = (1 + inflate) * (hi - lo) / 2
    dy = (1 + inflate) * np.abs(theta.imag).max()
    if max(dx, dy) <= 0:
        raise DegenerateBoxError("Ritz values coincide; cannot size a spectral box")
    return SpectralBox(float((hi + lo) / 2), float(dx), float(dy))


def _orth(X):
    """Orthonormalize a block; drop numerically dependent columns."""
    U, T = householder_qr(X)
    norms = np.linalg.norm(X, axis=0)
    keep = np.diag(T) > RANK_TOL * np.maximum(norms, np.finfo(float).tiny)
    keep &= norms > 0
    return U[:, keep], bool(not keep.all())


VARIANTS = ("monomial_orth", "partial_orth", "chebyshev")


def block_basis(op, Omega, p, variant="partial_orth", k=2, box=None):
    """Block Krylov basis ``[B_1, ..., B_p]`` generated by ``Omega``.

    Parameters
    ----------
    op : operator
    Omega : (n, b) array
        Generating block, typically standard normal.
    p : int
        Depth (number of blocks).
    variant : {"monomial_orth", "partial_orth", "chebyshev"}
        ``monomial_orth`` orthonormalizes each block of the monomial sequence,
        ``partial_orth`` additionally projects out the previous ``k`` blocks,
        ``chebyshev`` runs the scaled three-term recurrence for ``box`` with
        column normalization and no inner products.
    """
    op = as_operator(op)
    Omega = np.asarray(Omega, dtype=float)
    if Omega.ndim == 1:
        Omega = Omega[:, None]
    n, b = Omega.shape
    if variant not in VARIANTS:
        raise ArgumentError(f"unknown block variant {variant!r}; expected one of {VARIANTS}")
    if p < 1 or b * p > n:
        raise ArgumentError(f"need 1 <= p and b*p <= n, got b={b}, p={p}, n={n}")
    if variant == "chebyshev":
        if box is None:
            raise ArgumentError("chebyshev variant needs a spectral box")
        return _block_chebyshev(op, Omega, p, box)

    blocks, products = [], []
    B, breakdown = _orth(Omega)
    window = deque(maxlen=k)
    while B.shape[1]:
        AB = matmat(op, B)
        blocks.append(B)
        products.append(AB)
        window.append(B)
        if breakdown or len(blocks) == p:
            break
        X = AB
        if variant == "partial_orth":
            W = np.hstack(list(window))
            X = X - W @ (W.T @ X)
            X -= W @ (W.T @ X)
        B, breakdown = _orth(X)
        if not B.shape[1]:
            breakdown = True
    method = variant if variant == "monomial_orth" else f"partial_orth:{k}"
    return KrylovBasis(np.hstack(blocks), np.hstack(products), method,
                       block_size=b, depth=len(blocks), breakdown=breakdown)


def _block_chebyshev(op, Omega, p, box):
    c, rho = box.c, box.rho
    gamma = (box.dx**2 - box.dy**2) / (4 * rho)
    norms = np.linalg.norm(Omega, axis=0)
    if np.any(norms == 0):
        raise ArgumentError("generating block has a zero column")
    B = Omega / norms
    AB = matmat(op, B)
    blocks, products = [B], [AB]
    B_prev, ratio = None, None
    for _ in range(1, p):
        shifted = AB - c * B
        if B_prev is None:
            W = shifted / (2 * rho)
        else:
            W = (shifted - (gamma / ratio) * B_prev) / rho
        _check_finite(W, "block Chebyshev recurrence")
        nw = np.linalg.norm(W, axis=0)
        if np.any(nw == 0):
            raise BreakdownError("block Chebyshev recurrence produced a zero column")
        B_prev, B, ratio = B, W / nw, nw
        AB = matmat(op, B)
        blocks.append(B)
        products.append(AB)
    return KrylovBasis(np.hstack(blocks), np.hstack(products), "chebyshev",
                       block_size=Omega.shape[1], depth=len(blocks))
