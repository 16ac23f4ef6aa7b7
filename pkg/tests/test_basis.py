import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import full_arnoldi, jacobi_cond, principal_angles
from sketchy.basis import (
    SpectralBox,
    block_basis,
    chebyshev_basis,
    estimate_spectral_box,
    lanczos,
    leja_order,
    monomial_basis,
    newton_basis,
    partial_arnoldi,
    ritz_values,
)
from sketchy.errors import ArgumentError, DegenerateBoxError
from sketchy.operators import DiagonalOperator, as_operator, laplacian_2d, planted_diagonal

LAPLACE_BOX = SpectralBox(4.0, 4.0, 0.0)


def _random_sparse(n, seed):
    A = sp.random(n, n, density=0.05, random_state=seed, format="csr")
    return (A + sp.eye(n)).tocsr()


def _check_products(op, basis, rtol=1e-13):
    ref = as_operator(op) @ basis.B
    err = np.linalg.norm(basis.AB - ref, axis=0) / np.maximum(np.linalg.norm(ref, axis=0), 1e-300)
    assert err.max() <= rtol


def _check_unit_columns(basis):
    np.testing.assert_allclose(basis.norms, 1.0, atol=1e-12)


def test_partial_arnoldi_identity_breaks_down():
    basis = partial_arnoldi(np.eye(5), np.eye(5)[0], 3, 2)
    assert basis.breakdown and basis.d == 1


def test_partial_arnoldi_full_orthogonalization_limit():
    A = _random_sparse(100, 0)
    r = np.random.default_rng(0).standard_normal(100)
    basis = partial_arnoldi(A, r, 20, 19)
    assert np.linalg.norm(basis.B.T @ basis.B - np.eye(20)) <= 1e-10
    np.testing.assert_allclose(basis.B[:, 0], r / np.linalg.norm(r))


def test_partial_arnoldi_local_orthogonality():
    A = laplacian_2d(16)
    r = np.random.default_rng(1).standard_normal(256)
    k = 3
    basis = partial_arnoldi(A, r, 30, k)
    G = basis.B.T @ basis.B
    for j in range(30):
        for i in range(max(0, j - k), j):
            assert abs(G[i, j]) <= 1e-12
    _check_products(A, basis)
    _check_unit_columns(basis)


def test_partial_arnoldi_span_on_laplacian():
    A = laplacian_2d(32)
    r = np.random.default_rng(2).standard_normal(A.shape[0])
    basis = partial_arnoldi(A, r, 60, 4)
    Q = full_arnoldi(A, r, 60)
    Qb, _ = np.linalg.qr(basis.B)
    # largest principal angle via the complement projection
    gap = np.linalg.norm(Qb - Q @ (Q.T @ Qb), 2)
    assert gap <= 1e-8


def test_partial_arnoldi_errors():
    with pytest.raises(ArgumentError):
        partial_arnoldi(np.eye(3), np.zeros(3), 2, 1)
    with pytest.raises(ArgumentError):
        partial_arnoldi(np.eye(3), np.ones(3), 2, 0)


def test_lanczos_tridiagonal_small():
    A = np.diag([1.0, 2.0, 3.0])
    basis = lanczos(A, np.ones(3) / np.sqrt(3), 3)
    H = basis.B.T @ basis.AB
    assert abs(H[0, 2]) <= 1e-12 and abs(H[2, 0]) <= 1e-12
    assert basis.method == "lanczos"


def test_lanczos_tridiagonal_random():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((200, 200))
    A = M + M.T
    basis = lanczos(A, rng.standard_normal(200), 20)
    H = basis.B.T @ A @ basis.B
    tri = np.triu(np.tril(H, 1), -1)
    assert np.linalg.norm(H - tri) <= 1e-8 * np.linalg.norm(A, 2)


def test_lanczos_identity_breaks_down():
    basis = lanczos(np.eye(4), np.ones(4), 3)
    assert basis.breakdown and basis.d == 1


def test_chebyshev_scalar_annihilation():
    basis = chebyshev_basis(np.array([[2.5]]), np.array([1.0]), 3, SpectralBox(2.5, 1.0))
    assert basis.breakdown and basis.d == 1


def test_chebyshev_matches_unnormalized_recurrence():
    A = laplacian_2d(8).toarray()
    r = np.random.default_rng(4).standard_normal(64)
    box = LAPLACE_BOX
    c, rho = box.c, box.rho
    gamma = (box.dx**2 - box.dy**2) / (4 * rho)
    raw = [r / np.linalg.norm(r)]
    raw.append((A @ raw[0] - c * raw[0]) / (2 * rho))
    for _ in range(8):
        raw.append(((A @ raw[-1] - c * raw[-1]) - gamma * raw[-2]) / rho)
    ref = np.column_stack([v / np.linalg.norm(v) for v in raw])
    basis = chebyshev_basis(A, r, 10, box)
    np.testing.assert_allclose(basis.B, ref, atol=1e-12)
    _check_products(A, basis)


def test_chebyshev_conditioning_beats_monomial():
    A = laplacian_2d(32)
    r = np.random.default_rng(5).standard_normal(A.shape[0])
    cheb = chebyshev_basis(A, r, 100, LAPLACE_BOX)
    mono = monomial_basis(A, r, 100)
    k_cheb = np.linalg.cond(cheb.AB)
    k_mono = np.linalg.cond(mono.AB)
    assert np.log10(k_mono) - np.log10(k_cheb) >= 4


def test_monomial_condition_growth_is_monotone():
    A = laplacian_2d(32)
    r = np.random.default_rng(6).standard_normal(A.shape[0])
    mono = monomial_basis(A, r, 40)
    cheb = chebyshev_basis(A, r, 40, LAPLACE_BOX)
    conds = [np.linalg.cond(mono.B[:, :d]) for d in range(5, 41, 5)]
    assert np.all(np.diff(conds) > 0)
    assert conds[-1] > np.linalg.cond(cheb.B)


@pytest.mark.filterwarnings("ignore:overflow")
def test_chebyshev_overflow_reports_box():
    A = np.diag(np.linspace(0, 1e200, 10))
    with pytest.raises(ArgumentError, match="larger spectral box"):
        chebyshev_basis(A, np.ones(10), 10, SpectralBox(0.0, 1e-200))


def test_newton_zero_shifts_is_monomial():
    A = laplacian_2d(6)
    r = np.random.default_rng(7).standard_normal(36)
    newton = newton_basis(A, r, np.zeros(9))
    np.testing.assert_allclose(newton.B, monomial_basis(A, r, 10).B, atol=1e-13)


def test_newton_exact_eigenvalues_annihilate():
    rng = np.random.default_rng(8)
    lam = np.array([1.0, -2.0, 3.0, 0.5, 4.0])
    V = rng.standard_normal((5, 5))
    A = V @ np.diag(lam) @ np.linalg.inv(V)
    basis = newton_basis(A, rng.standard_normal(5), lam, d=6)
    assert basis.breakdown and basis.d == 5


def test_newton_conjugate_pair_matches_complex_recurrence():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((30, 30))
    r = rng.standard_normal(30)
    shifts = np.array([0.5 + 1j, 0.5 - 1j, -1.0, 2 + 0.5j, 2 - 0.5j])
    basis = newton_basis(A, r, shifts)
    v = (r / np.linalg.norm(r)).astype(complex)
    cols = [v]
    for theta in shifts:
        v = A @ v - theta * v
        cols.append(v)
    # a conjugate pair only spans real directions once both halves are applied
    ref = np.column_stack(cols)
    for j in (0, 2, 3, 5):
        col = ref[:, j]
        assert np.abs(col.imag).max() <= 1e-10 * np.abs(col).max()
        np.testing.assert_allclose(basis.B[:, j], col.real / np.linalg.norm(col.real), atol=1e-12)
    _check_products(A, basis)


def test_newton_unpaired_shift_rejected():
    with pytest.raises(ArgumentError):
        newton_basis(np.eye(3), np.ones(3), [1 + 1j, 2.0])
    with pytest.raises(ArgumentError):
        newton_basis(np.eye(3), np.zeros(3), [1.0])


def test_newton_ritz_shifts_beat_monomial():
    A = laplacian_2d(32)
    r = np.random.default_rng(10).standard_normal(A.shape[0])
    shifts = leja_order(ritz_values(A, 39, seed=0))
    newton = newton_basis(A, r, shifts)
    mono = monomial_basis(A, r, 40)
    assert newton.d == 40
    assert np.log10(jacobi_cond(mono.B)) - np.log10(jacobi_cond(newton.B)) >= 4


def test_leja_order_keeps_pairs():
    pts = np.array([1.0, 2 - 1j, 2 + 1j, -3.0, 0.5j, -0.5j])
    out = leja_order(pts)
    assert out[0] == -3.0
    np.testing.assert_allclose(np.sort_complex(out), np.sort_complex(pts))
    for i, z in enumerate(out):
        if z.imag > 0:
            assert out[i + 1] == np.conj(z)


@pytest.mark.parametrize("method", ["arnoldi", "chebyshev", "newton"])
def test_span_matches_full_arnoldi(method):
    A = laplacian_2d(20)
    r = np.random.default_rng(11).standard_normal(400)
    d = 15
    if method == "arnoldi":
        basis = partial_arnoldi(A, r, d, 2)
    elif method == "chebyshev":
        basis = chebyshev_basis(A, r, d, LAPLACE_BOX)
    else:
        basis = newton_basis(A, r, leja_order(ritz_values(A, d - 1)))
    assert principal_angles(basis.B, full_arnoldi(A, r, d)).max() <= 1e-8
    _check_products(A, basis)
    _check_unit_columns(basis)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 12), st.integers(1, 4))
def test_products_and_norms_property(seed, d, k):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((40, 40)) / np.sqrt(40)
    r = rng.standard_normal(40)
    box = SpectralBox(0.0, 1.2, 1.2)
    for basis in (partial_arnoldi(A, r, d, k), chebyshev_basis(A, r, d, box), monomial_basis(A, r, d)):
        assert np.all(np.isfinite(basis.B))
        _check_products(A, basis)
        _check_unit_columns(basis)


def test_block_single_column_specializations():
    A = laplacian_2d(10)
    r = np.random.default_rng(12).standard_normal(100)
    np.testing.assert_allclose(block_basis(A, r[:, None], 12, "partial_orth", k=3).B,
                               partial_arnoldi(A, r, 12, 3).B, atol=1e-12)
    np.testing.assert_allclose(block_basis(A, r[:, None], 12, "monomial_orth").B,
                               monomial_basis(A, r, 12).B, atol=1e-12)
    np.testing.assert_allclose(block_basis(A, r[:, None], 12, "chebyshev", box=LAPLACE_BOX).B,
                               chebyshev_basis(A, r, 12, LAPLACE_BOX).B, atol=1e-12)


def test_block_identity():
    basis = block_basis(np.diag(np.arange(1.0, 7.0)), np.eye(6), 1, "monomial_orth")
    np.testing.assert_allclose(basis.B, np.eye(6), atol=1e-15)


@pytest.mark.parametrize("variant", ["monomial_orth", "partial_orth", "chebyshev"])
def test_block_products(variant):
    A = laplacian_2d(12)
    Omega = np.random.default_rng(13).standard_normal((144, 4))
    basis = block_basis(A, Omega, 6, variant, box=LAPLACE_BOX)
    assert basis.d == 24 and basis.block_size == 4 and basis.depth == 6
    _check_products(A, basis)
    _check_unit_columns(basis)
    if variant != "chebyshev":
        for i in range(6):
            Bi = basis.B[:, 4 * i:4 * i + 4]
            np.testing.assert_allclose(Bi.T @ Bi, np.eye(4), atol=1e-12)


def test_block_rank_deficient_truncates():
    A = np.diag([1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0])
    Omega = np.random.default_rng(14).standard_normal((8, 2))
    # only four distinct eigenvalues, so the block Krylov space has dimension 8 at most
    basis = block_basis(A, Omega, 4, "partial_orth", k=3)
    assert basis.d <= 8
    Omega = np.zeros((8, 2))
    Omega[0, :] = 1.0
    basis = block_basis(A, Omega, 2, "monomial_orth")
    assert basis.breakdown and basis.B.shape[1] == 1


def test_block_errors():
    with pytest.raises(ArgumentError):
        block_basis(np.eye(4), np.ones((4, 2)), 3)
    with pytest.raises(ArgumentError):
        block_basis(np.eye(4), np.ones((4, 1)), 2, "bogus")
    with pytest.raises(ArgumentError):
        block_basis(np.eye(4), np.ones((4, 1)), 2, "chebyshev")


def test_block_chebyshev_conditioning_grows_on_planted():
    op = planted_diagonal(2**13, seed=0)
    Omega = np.random.default_rng(0).standard_normal((2**13, 20))
    box = SpectralBox(0.5, 0.55, 0.0)
    conds = [np.linalg.cond(block_basis(op, Omega, p, "chebyshev", box=box).B) for p in (5, 15, 25, 35)]
    assert np.all(np.diff(conds) > 0)
    assert conds[-1] > 1e14


def test_estimate_box_diagonal():
    op = DiagonalOperator(np.linspace(0, 8, 300))
    box = estimate_spectral_box(op, m=20)
    assert box.contains(np.array([0.0, 8.0]), rtol=0.0).all()
    assert box.c == pytest.approx(4.0, rel=0.15)
    assert box.dy <= 1e-8 * box.rho


def test_estimate_box_symmetric_is_real():
    box = estimate_spectral_box(laplacian_2d(16), m=20)
    assert box.dy <= 1e-8 * box.rho


def test_estimate_box_identity_is_degenerate():
    with pytest.raises(DegenerateBoxError):
        estimate_spectral_box(np.eye(10))
    with pytest.raises(ArgumentError):
        estimate_spectral_box(np.eye(10), m=1)


def test_spectral_box_validation():
    assert SpectralBox(0.0, 1.0, 2.0).rho == 2.0
    with pytest.raises(ArgumentError):
        SpectralBox(0.0, -1.0)
    with pytest.raises(ArgumentError):
        SpectralBox(0.0, 0.0, 0.0)
