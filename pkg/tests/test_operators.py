import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import laplacian_2d_eigenvalues
from sketchy.errors import ArgumentError, ParseError
from sketchy.operators import (
    DiagonalOperator,
    PreconditionedOperator,
    as_operator,
    laplacian_2d,
    matmat,
    matvec,
    planted_diagonal,
    read_matrix_market,
    trs_operator,
    write_matrix_market,
)


def test_matvec_dimension_check():
    op = as_operator(np.eye(3))
    with pytest.raises(ArgumentError):
        matvec(op, np.ones(4))
    with pytest.raises(ArgumentError):
        matmat(op, np.ones((2, 2)))


def test_laplacian_structure():
    L = laplacian_2d(4)
    assert L.shape == (16, 16)
    assert abs(L - L.T).max() == 0
    assert np.linalg.norm(L @ np.ones(16)) == 0
    assert np.all(np.diff(L.indptr) >= 0)
    for i in range(16):
        cols = L.indices[L.indptr[i]:L.indptr[i + 1]]
        assert np.all(np.diff(cols) > 0)


@pytest.mark.parametrize("m", [4, 9, 32])
def test_laplacian_spectrum_closed_form(m):
    ev = np.linalg.eigvalsh(laplacian_2d(m).toarray())
    np.testing.assert_allclose(ev, laplacian_2d_eigenvalues(m), atol=1e-10)
    assert ev.min() >= -1e-12 and ev.max() <= 8


def test_trs_blocks():
    op = trs_operator(6, seed=2)
    x = np.random.default_rng(0).standard_normal(6)
    A = op.A.toarray()
    np.testing.assert_allclose(op @ np.concatenate([x, np.zeros(6)]), np.concatenate([A @ x, -x]))
    coupling = -op.g * (op.g @ x) / op.Delta**2
    np.testing.assert_allclose(op @ np.concatenate([np.zeros(6), x]), np.concatenate([coupling, A @ x]))
    assert np.linalg.norm(op.g) == pytest.approx(0.01)
    np.testing.assert_allclose(np.diag(A), np.linspace(-1, 1, 6))


def test_trs_dense_equivalence_and_adjoint():
    op = trs_operator(200, seed=1)
    M = op.todense()
    X = np.random.default_rng(1).standard_normal((400, 3))
    np.testing.assert_allclose(op @ X, M @ X, atol=1e-14)
    np.testing.assert_allclose(op.T @ X, M.T @ X, atol=1e-14)


def test_trs_rightmost_eigenvalue_is_real():
    op = trs_operator(100, seed=0)
    ev = np.linalg.eigvals(op.todense())
    top = ev[np.argmax(ev.real)]
    assert abs(top.imag) <= 1e-12
    # compare with the root of the secular equation g^T (lambda - A)^-2 g = Delta^2
    a, V = np.linalg.eigh(op.A.toarray())
    h = V.T @ op.g
    phi = lambda lam: np.sum((h / (lam - a)) ** 2) - op.Delta**2
    lo, hi = a.max() + 1e-14, a.max() + 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if phi(mid) > 0 else (lo, mid)
    assert top.real == pytest.approx(0.5 * (lo + hi), rel=1e-10)


def test_planted_diagonal():
    op = planted_diagonal(100, seed=3)
    d = op.diagonal
    assert np.all((op.planted >= -1) & (op.planted <= -0.1))
    np.testing.assert_array_equal(d[:10], op.planted)
    np.testing.assert_allclose(d[10:], np.linspace(0, 1, 90))
    x = np.arange(100.0)
    np.testing.assert_allclose(op @ x, d * x)
    with pytest.raises(ArgumentError):
        planted_diagonal(10)


def test_preconditioned_operator():
    A = np.diag([2.0, 4.0, 8.0])
    op = PreconditionedOperator(A, lambda v: v / np.diag(A))
    np.testing.assert_allclose(op @ np.ones(3), np.ones(3))
    np.testing.assert_allclose(op.rhs(np.array([2.0, 4.0, 8.0])), np.ones(3))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_operator_linearity(seed):
    rng = np.random.default_rng(seed)
    ops = [as_operator(laplacian_2d(5)), trs_operator(12, seed=seed % 7), DiagonalOperator(rng.standard_normal(25))]
    for op in ops:
        n = op.shape[0]
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        a, b = rng.standard_normal(2)
        np.testing.assert_allclose(matvec(op, a * x + b * y), a * matvec(op, x) + b * matvec(op, y), atol=1e-12)


def test_matrix_market_roundtrip(tmp_path):
    A = sp.random(30, 30, density=0.1, random_state=0, format="csr")
    path = tmp_path / "a.mtx"
    write_matrix_market(path, A)
    B = read_matrix_market(path)
    assert abs(A - B).max() == 0
    write_matrix_market(path, B)
    C = read_matrix_market(path)
    assert abs(B - C).max() == 0


def test_matrix_market_symmetric_and_duplicates(tmp_path):
    path = tmp_path / "s.mtx"
    path.write_text(
        "%%MatrixMarket matrix coordinate real symmetric\n"
        "% comment\n"
        "3 3 4\n"
        "1 1 2.0\n"
        "2 1 -1.0\n"
        "3 3 1.5\n"
        "3 3 0.5\n"
    )
    A = read_matrix_market(path).toarray()
    np.testing.assert_array_equal(A, [[2, -1, 0], [-1, 0, 0], [0, 0, 2]])
    L = laplacian_2d(3)
    write_matrix_market(path, L, symmetric=True)
    assert abs(read_matrix_market(path) - L).max() == 0


@pytest.mark.parametrize(
    "text,lineno",
    [
        ("%%MatrixMarket matrix array real general\n2 2\n", 1),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", 3),
        ("garbage\n", 1),
    ],
)
def test_matrix_market_errors(tmp_path, text, lineno):
    path = tmp_path / "bad.mtx"
    path.write_text(text)
    with pytest.raises(ParseError) as info:
        read_matrix_market(path)
    assert info.value.lineno == lineno
    assert str(info.value).startswith(f"line {lineno}:")
