"""Sparse and small dense linear algebra used by the scheme.

Sparse matrices are ``scipy.sparse.csr_matrix`` instances; this module adds
deterministic assembly, a Jacobi-preconditioned conjugate gradient, dense
LU solves, a power-iteration spectral radius estimate and an M-matrix test.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp


class AssemblyError(ValueError):
    pass


class SolverError(RuntimeError):
    """Iterative or direct solve failed; ``residual`` holds the last value."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


def assemble_from_triplets(n_rows: int, n_cols: int, triplets) -> sp.csr_matrix:
    """Build a CSR matrix from ``(i, j, value)`` triplets, summing duplicates.

    ``triplets`` may be a list of tuples or a tuple of three arrays
    ``(rows, cols, values)``.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3 and np.ndim(triplets[0]) == 1:
        rows, cols, vals = (np.asarray(a) for a in triplets)
    else:
        t = list(triplets)
        if t:
            rows, cols, vals = (np.asarray(a) for a in zip(*t))
        else:
            rows = cols = np.empty(0, dtype=np.int64)
            vals = np.empty(0)
    rows = rows.astype(np.int64, copy=False)
    cols = cols.astype(np.int64, copy=False)
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise AssemblyError(f"triplet index out of range for a {n_rows}x{n_cols} matrix")
    A = sp.coo_matrix((vals.astype(float), (rows, cols)), shape=(n_rows, n_cols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def cg_solve(
    A: sp.spmatrix,
    b: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 1000,
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradient for SPD ``A``.

    Stops once ``||A x - b||_2 <= tol * ||b||_2``. Raises ``SolverError``
    with the last residual norm when ``max_iter`` is exhausted.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    dinv = 1.0 / A.diagonal()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    rnorm = np.linalg.norm(r)
    if rnorm <= tol * bnorm:
        return x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= tol * bnorm:
            # recurrence drift: confirm on the true residual
            rnorm = np.linalg.norm(b - A @ x)
            if rnorm <= tol * bnorm:
                return x
            r = b - A @ x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {max_iter} iterations", residual=float(rnorm / bnorm))


def dense_lu_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` by LU with partial pivoting."""
    return DenseLU(A).solve(B)


class DenseLU:
    """Reusable LU factorization of a dense square matrix."""

    def __init__(self, A: np.ndarray):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        with warnings.catch_warnings():
            # singularity is reported below as a SolverError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
        d = np.abs(np.diag(lu))
        if d.min() <= np.finfo(float).eps * max(d.max(), 1.0) * A.shape[0]:
            raise SolverError("matrix is singular to working precision")
        self._factors = (lu, piv)

    def solve(self, B: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(self._factors, np.asarray(B, dtype=float))


@dataclass(frozen=True)
class SpectralEstimate:
    value: float
    converged: bool
    iterations: int

    def __float__(self) -> float:
        return self.value


def _ritz_radius(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> float:
    """Largest Ritz value modulus on span{x, Ax} given y = Ax, z = Ay."""
    K = np.column_stack([x, y])
    V, R = np.linalg.qr(K)
    if abs(R[1, 1]) <= 1e-13 * abs(R[0, 0]):
        # x is (numerically) an eigenvector
        return abs(float(x @ y) / float(x @ x))
    AV = np.linalg.solve(R.T, np.column_stack([y, z]).T).T
    B = V.T @ AV
    return float(np.max(np.abs(np.linalg.eigvals(B))))


def power_iteration_spectral_radius(
    apply: Callable[[np.ndarray], np.ndarray],
    size: int,
    tol: float = 1e-10,
    max_iter: int = 1000,
    seed: int = 0,
) -> SpectralEstimate:
    """Estimate ``max |lambda|`` of a linear operator.

    Plain power iteration stalls when the dominant eigenvalues form a complex
    conjugate pair or a ``+-lambda`` pair, so the estimate is taken from the
    2x2 Rayleigh-Ritz problem on the Krylov block ``span{x_k, A x_k}``, which
    captures any such pair exactly.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(size)
    x /= np.linalg.norm(x)
    y = apply(x)
    prev = np.inf
    est = 0.0
    for it in range(1, max_iter + 1):
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return SpectralEstimate(0.0, True, it)
        z = apply(y)
        est = _ritz_radius(x, y, z)
        if abs(est - prev) <= tol * max(est, 1e-300):
            return SpectralEstimate(est, True, it)
        prev = est
        x = y / ny
        y = z / ny
    return SpectralEstimate(est, False, max_iter)


@dataclass(frozen=True)
class MMatrixVerdict:
    is_m_matrix: bool
    reason: str
    varah_bound: Optional[float] = None

    def __bool__(self) -> bool:
        return self.is_m_matrix


def is_m_matrix(A, atol: float = 0.0) -> MMatrixVerdict:
    """Sufficient M-matrix test: Z-sign pattern plus weak row diagonal
    dominance with at least one strictly dominant row.

    When every row is strictly dominant the Varah bound
    ``1 / min_i (|a_ii| - sum_{j != i} |a_ij|)`` on ``||A^{-1}||_inf`` is
    reported too. Irreducibility is assumed for the weak-dominance case
    (true for matrices assembled on a connected mesh).
    """
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    diag = A.diagonal()
    off = A - sp.diags(diag)
    off.eliminate_zeros()
    if np.any(diag <= 0):
        return MMatrixVerdict(False, "nonpositive diagonal entry")
    if off.nnz and off.data.max() > atol:
        return MMatrixVerdict(False, "positive off-diagonal entry")
    offsum = np.asarray(abs(off).sum(axis=1)).ravel()
    margin = diag - offsum
    scale = np.maximum(diag, 1e-300)
    if np.any(margin < -1e-14 * scale):
        return MMatrixVerdict(False, "row not diagonally dominant")
    if not np.any(margin > 1e-14 * scale):
        return MMatrixVerdict(False, "no strictly dominant row")
    varah = float(1.0 / margin.min()) if margin.min() > 0 else None
    return MMatrixVerdict(True, "Z-matrix, diagonally dominant", varah)


@dataclass(frozen=True)
class BlockMatrix2x2:
    """``[[A, B], [C, D]]`` acting on stacked vectors ``(u, v)``."""

    A: sp.spmatrix
    B: sp.spmatrix
    C: sp.spmatrix
    D: sp.spmatrix

    def __post_init__(self):
        n0, n1 = self.A.shape[0], self.C.shape[0]
        m0, m1 = self.A.shape[1], self.B.shape[1]
        if self.B.shape[0] != n0 or self.D.shape != (n1, m1) or self.C.shape[1] != m0:
            raise ValueError("block dimensions do not conform")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.A.shape[0] + self.C.shape[0], self.A.shape[1] + self.B.shape[1])

    def to_sparse(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.B], [self.C, self.D]], format="csr")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        m0 = self.A.shape[1]
        u, v = x[:m0], x[m0:]
        return np.concatenate([self.A @ u + self.B @ v, self.C @ u + self.D @ v])
