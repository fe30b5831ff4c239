import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_spectral_radius, inverse_nonnegative
from rdch.sparse import (
    AssemblyError,
    BlockMatrix2x2,
    SolverError,
    assemble_from_triplets,
    cg_solve,
    dense_lu_solve,
    is_m_matrix,
    power_iteration_spectral_radius,
)


def test_triplets_sum_duplicates():
    A = assemble_from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0)])
    assert A[0, 0] == 3.0
    assert A.nnz == 1


def test_triplets_empty_and_identity():
    assert assemble_from_triplets(3, 3, []).nnz == 0
    I = assemble_from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 1.0)])
    np.testing.assert_array_equal(I.toarray(), np.eye(2))


def test_triplets_array_form_and_range():
    A = assemble_from_triplets(2, 3, (np.array([0, 1, 1]), np.array([2, 0, 0]), np.array([1.0, 2.0, 3.0])))
    np.testing.assert_array_equal(A.toarray(), [[0, 0, 1], [5, 0, 0]])
    with pytest.raises(AssemblyError):
        assemble_from_triplets(2, 2, [(2, 0, 1.0)])


def test_cg_identity_and_diag():
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(cg_solve(sp.identity(3), b), b)
    np.testing.assert_allclose(cg_solve(sp.diags([2.0, 4.0]), np.array([2.0, 8.0])), [1.0, 2.0])


def test_cg_random_spd():
    rng = np.random.default_rng(7)
    G = rng.standard_normal((50, 50))
    A = G @ G.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x = cg_solve(sp.csr_matrix(A), b, tol=1e-12)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_cg_reports_residual_on_failure():
    n = 200
    A = sp.diags([-np.ones(n - 1), 2.0001 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    with pytest.raises(SolverError) as info:
        cg_solve(A, np.ones(n), tol=1e-14, max_iter=3)
    assert info.value.residual > 0


def test_cg_zero_rhs():
    np.testing.assert_array_equal(cg_solve(sp.identity(4), np.zeros(4)), np.zeros(4))


def test_dense_lu():
    B = np.arange(6.0).reshape(3, 2)
    np.testing.assert_allclose(dense_lu_solve(np.eye(3), B), B)
    np.testing.assert_allclose(dense_lu_solve(np.array([[2.0]]), np.array([4.0])), [2.0])
    rng = np.random.default_rng(3)
    A = rng.standard_normal((20, 20)) + 5 * np.eye(20)
    B = rng.standard_normal((20, 3))
    assert np.abs(A @ dense_lu_solve(A, B) - B).max() < 1e-10
    with pytest.raises(SolverError):
        dense_lu_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


@pytest.mark.parametrize(
    "A, expected, tol",
    [
        (np.diag([1.0, 0.5]), 1.0, 1e-8),
        (np.array([[0.0, -1.0], [1.0, 0.0]]), 1.0, 1e-6),
        (np.diag([3.0, -3.0]), 3.0, 1e-8),
    ],
    ids=["diag", "rotation", "plus-minus"],
)
def test_power_iteration_examples(A, expected, tol):
    est = power_iteration_spectral_radius(lambda x: A @ x, 2)
    assert est.converged
    assert est.value == pytest.approx(expected, abs=tol)


def test_power_iteration_symmetric_matches_dense():
    rng = np.random.default_rng(11)
    for size in (5, 12, 20):
        G = rng.standard_normal((size, size))
        A = G + G.T
        est = power_iteration_spectral_radius(lambda x: A @ x, size, tol=1e-13, max_iter=20000)
        assert est.value == pytest.approx(dense_spectral_radius(A), rel=1e-6)


def test_power_iteration_complex_pair():
    # rotation-scaling block dominates a smaller real eigenvalue
    A = np.array([[0.6, -0.8, 0.0], [0.8, 0.6, 0.0], [0.0, 0.0, 0.3]]) * 2
    est = power_iteration_spectral_radius(lambda x: A @ x, 3)
    assert est.value == pytest.approx(2.0, rel=1e-8)


def test_m_matrix_examples():
    v = is_m_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    assert v and v.varah_bound == pytest.approx(1.0)
    v = is_m_matrix(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert not v and "positive off-diagonal" in v.reason


def test_m_matrix_weakly_dominant_has_no_varah_bound():
    v = is_m_matrix(np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]]))
    assert v and v.varah_bound is None


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_m_matrix_verdict_agrees_with_inverse(size, seed):
    rng = np.random.default_rng(seed)
    off = -rng.random((size, size)) * (rng.random((size, size)) < 0.6)
    np.fill_diagonal(off, 0)
    rowsum = -off.sum(axis=1)
    A = off + np.diag(rowsum + rng.random(size) * 0.5)
    verdict = is_m_matrix(A)
    # sufficient test: a positive verdict implies a nonnegative inverse
    if verdict:
        assert inverse_nonnegative(A)
    # strictly dominant Z-matrices are always detected
    if np.all(np.diag(A) > rowsum):
        assert verdict


def test_block_matrix():
    A, B, C, D = (sp.csr_matrix(np.full((2, 2), float(k))) for k in range(1, 5))
    H = BlockMatrix2x2(A, B, C, D)
    assert H.shape == (4, 4)
    x = np.arange(4.0)
    np.testing.assert_allclose(H @ x, H.to_dense() @ x)
    with pytest.raises(ValueError):
        BlockMatrix2x2(A, sp.csr_matrix((3, 2)), C, D)
