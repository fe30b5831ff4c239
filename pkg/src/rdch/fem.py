"""P1 finite element operators: mass, lumped mass, stiffness, the upwind
mobility matrix and the weighted stiffness of the linearized scheme.

All matrices share one sparsity pattern (node-to-node adjacency plus the
diagonal), so assembly reduces to scattering element or edge contributions
into a fixed CSR data array.
"""

from __future__ import annotations

import logging
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import SimplicialMesh, element_measures
from .sparse import SolverError, assemble_from_triplets

log = logging.getLogger(__name__)

#: slack on [0, 1] before the upwind assembly reports a bounds violation
BOUNDS_SLACK = 1e-12


class BoundsError(ValueError):
    """Nodal density left [0, 1] where the unregularized problem needs it."""


def _barycentric_gradients(mesh: SimplicialMesh) -> np.ndarray:
    """Gradients of the P1 basis on each element, shape (n_el, d+1, d)."""
    p = mesh.vertices[mesh.elements]
    if mesh.dimension == 1:
        h = p[:, 1, 0] - p[:, 0, 0]
        g = np.empty((mesh.n_elements, 2, 1))
        g[:, 0, 0] = -1.0 / h
        g[:, 1, 0] = 1.0 / h
        return g
    # rows of inv([x1-x0, x2-x0]^T) give grad lambda_1, grad lambda_2
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=1)
    Jinv = np.linalg.inv(J)
    g12 = np.transpose(Jinv, (0, 2, 1))
    g0 = -g12.sum(axis=1, keepdims=True)
    return np.concatenate([g0, g12], axis=1)


class FemSpace:
    """P1 Lagrange space on a simplicial mesh with cached operators."""

    def __init__(self, mesh: SimplicialMesh):
        self.mesh = mesh
        self.n_dofs = mesh.n_nodes
        self.dimension = mesh.dimension
        self.volumes = element_measures(mesh)
        self.gradients = _barycentric_gradients(mesh)

        el = mesh.elements
        k = el.shape[1]
        rows = np.repeat(el, k, axis=1).ravel()
        cols = np.tile(el, (1, k)).ravel()
        diag = np.arange(self.n_dofs)
        pattern = assemble_from_triplets(
            self.n_dofs,
            self.n_dofs,
            (np.concatenate([rows, diag]), np.concatenate([cols, diag]), np.ones(rows.size + diag.size)),
        )
        self._indptr = pattern.indptr
        self._indices = pattern.indices
        self._nnz = pattern.nnz
        self._elem_pos = self._positions(rows, cols).reshape(-1, k, k)
        self._diag_pos = self._positions(diag, diag)

        e = mesh.edges
        self.edge_i = e[:, 0]
        self.edge_j = e[:, 1]
        self._edge_pos_ij = self._positions(self.edge_i, self.edge_j)
        self._edge_pos_ji = self._positions(self.edge_j, self.edge_i)

        # |K| grad(lambda_a) . grad(lambda_b)
        self._local_stiffness = self.volumes[:, None, None] * np.einsum(
            "kad,kbd->kab", self.gradients, self.gradients
        )
        d = self.dimension
        local_mass = (np.ones((k, k)) + np.eye(k)) / ((d + 1) * (d + 2))
        self._local_mass = self.volumes[:, None, None] * local_mass

    def _positions(self, rows, cols) -> np.ndarray:
        """Index into the CSR data array of entries (rows[m], cols[m])."""
        # CSR with sorted indices lists keys row * N + col in ascending order
        N = self.n_dofs
        pattern_rows = np.repeat(np.arange(N), np.diff(self._indptr))
        keys = pattern_rows * N + self._indices
        query = np.asarray(rows, dtype=np.int64) * N + np.asarray(cols, dtype=np.int64)
        pos = np.searchsorted(keys, query)
        if np.any(keys[np.minimum(pos, keys.size - 1)] != query):
            raise KeyError("entry outside the sparsity pattern")
        return pos

    def _matrix(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(self.n_dofs, self.n_dofs))

    def _assemble_elementwise(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self._elem_pos.ravel(), weights=local.ravel(), minlength=self._nnz)
        return self._matrix(data)

    # -- constant operators ------------------------------------------------

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return self._assemble_elementwise(self._local_mass)

    @cached_property
    def lumped_diag(self) -> np.ndarray:
        """Diagonal of the lumped mass matrix (equal to the dual cell volumes)."""
        out = np.asarray(self.mass.sum(axis=1)).ravel()
        out.flags.writeable = False
        return out

    @cached_property
    def lumped_mass(self) -> sp.csr_matrix:
        data = np.zeros(self._nnz)
        data[self._diag_pos] = self.lumped_diag
        return self._matrix(data)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return self._assemble_elementwise(self._local_stiffness)

    @cached_property
    def edge_q(self) -> np.ndarray:
        """Stiffness entry ``Q_ij`` for every mesh edge."""
        out = self.stiffness.data[self._edge_pos_ij].copy()
        out.flags.writeable = False
        return out

    # -- state-dependent operators -----------------------------------------

    def upwind_coefficients(self, n: np.ndarray, xi: np.ndarray, epsilon: float = 0.0) -> np.ndarray:
        """Edge mobility ``B_ij`` upwinded on the sign of ``xi_i - xi_j``.

        Each edge is stored once with ``i < j``; a tie ``xi_i == xi_j`` takes
        ``n_j (1 - n_i)^2``, and the same value is used for ``B_ji`` so the
        assembled matrix stays symmetric. With ``epsilon > 0`` the nodal
        densities are first clamped to ``[epsilon, 1 - epsilon]``.
        """
        n = np.asarray(n, dtype=float)
        if epsilon > 0:
            n = np.clip(n, epsilon, 1.0 - epsilon)
        elif n.size and (n.min() < -BOUNDS_SLACK or n.max() > 1.0 + BOUNDS_SLACK):
            raise BoundsError(f"nodal density outside [0, 1]: min={n.min():.3e}, max={n.max():.3e}")
        ni, nj = n[self.edge_i], n[self.edge_j]
        forward = xi[self.edge_i] - xi[self.edge_j] > 0
        return np.where(forward, ni * (1 - nj) ** 2, nj * (1 - ni) ** 2)

    def upwind_matrix_from_coefficients(self, B: np.ndarray) -> sp.csr_matrix:
        off = B * self.edge_q
        data = np.zeros(self._nnz)
        data[self._edge_pos_ij] = off
        data[self._edge_pos_ji] = off
        rowsum = np.bincount(self.edge_i, weights=off, minlength=self.n_dofs) + np.bincount(
            self.edge_j, weights=off, minlength=self.n_dofs
        )
        data[self._diag_pos] = -rowsum
        return self._matrix(data)

    def upwind_apply(self, B: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``U v`` evaluated edge by edge; exact zero row sums by construction."""
        flux = B * self.edge_q * (v[self.edge_j] - v[self.edge_i])
        return np.bincount(self.edge_i, weights=flux, minlength=self.n_dofs) - np.bincount(
            self.edge_j, weights=flux, minlength=self.n_dofs
        )

    @cached_property
    def h1_projector(self):
        """Factorized bordered system ``[[Q, m], [m^T, 0]]`` (m = lumped diagonal)."""
        m = self.lumped_diag
        K = sp.bmat(
            [[self.stiffness, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]],
            format="csc",
        )
        try:
            return spla.splu(K)
        except RuntimeError as exc:
            raise SolverError(f"lumped H1 projection failed: {exc}") from exc

    def weighted_stiffness(self, coeff_nodal: np.ndarray) -> sp.csr_matrix:
        c = np.asarray(coeff_nodal, dtype=float)[self.mesh.elements].mean(axis=1)
        if np.any(c < 0):
            log.warning("clamping %d negative element coefficients to 0", int(np.sum(c < 0)))
            c = np.maximum(c, 0.0)
        return self._assemble_elementwise(c[:, None, None] * self._local_stiffness)


def assemble_mass(space: FemSpace) -> sp.csr_matrix:
    return space.mass


def assemble_lumped_mass(space: FemSpace) -> sp.csr_matrix:
    return space.lumped_mass


def assemble_stiffness(space: FemSpace) -> sp.csr_matrix:
    return space.stiffness


def assemble_upwind_matrix(space: FemSpace, n_nodal, xi_nodal, epsilon: float = 0.0) -> sp.csr_matrix:
    """Upwind mobility matrix ``U`` with ``U_ij = B_ij Q_ij`` off the
    diagonal and ``U_ii = -sum_{j != i} U_ij``."""
    xi = np.asarray(xi_nodal, dtype=float)
    return space.upwind_matrix_from_coefficients(space.upwind_coefficients(n_nodal, xi, epsilon))


def assemble_weighted_stiffness(space: FemSpace, coeff_nodal) -> sp.csr_matrix:
    """Stiffness with an elementwise coefficient equal to the vertex mean of
    ``coeff_nodal``, clamped below at zero."""
    return space.weighted_stiffness(coeff_nodal)


def _check_len(space: FemSpace, *vs):
    for v in vs:
        if np.shape(v) != (space.n_dofs,):
            raise ValueError(f"expected a nodal vector of length {space.n_dofs}, got shape {np.shape(v)}")


def lumped_inner_product(space: FemSpace, f_nodal, g_nodal) -> float:
    f = np.asarray(f_nodal, dtype=float)
    g = np.asarray(g_nodal, dtype=float)
    _check_len(space, f, g)
    return float(np.sum(space.lumped_diag * f * g))


def l2_inner_product(space: FemSpace, f_nodal, g_nodal) -> float:
    f = np.asarray(f_nodal, dtype=float)
    g = np.asarray(g_nodal, dtype=float)
    _check_len(space, f, g)
    return float(f @ (space.mass @ g))


def h1_seminorm_sq(space: FemSpace, f_nodal) -> float:
    f = np.asarray(f_nodal, dtype=float)
    _check_len(space, f)
    return float(f @ (space.stiffness @ f))


def interpolate_nodal(space: FemSpace, f) -> np.ndarray:
    """Nodal values ``f(x_j)``; ``f`` receives one coordinate array per axis."""
    coords = space.mesh.vertices
    values = np.asarray(f(*coords.T), dtype=float)
    values = np.broadcast_to(values, (space.n_dofs,)).copy()
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"non-finite value {values[i]} at node {i} ({coords[i].tolist()})")
    return values


def lumped_h1_project(space: FemSpace, v_nodal) -> np.ndarray:
    """Lumped H1 projection of a nodal vector onto V^h.

    Solves ``Q p = Q v`` with the lumped mean ``(p, 1)^h = (v, 1)^h`` as a
    bordered saddle-point system.
    """
    v = np.asarray(v_nodal, dtype=float)
    _check_len(space, v)
    m = space.lumped_diag
    rhs = np.concatenate([space.stiffness @ v, [m @ v]])
    p = space.h1_projector.solve(rhs)[: space.n_dofs]
    # remove round-off drift in the constraint
    p += (m @ v - m @ p) / m.sum()
    return p
