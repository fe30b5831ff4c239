"""Discrete energy, dissipation and entropy, plus the offline analyses:
amplification-matrix stability scans and mesh refinement studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import physics
from .fem import FemSpace, interpolate_nodal
from .physics import ModelParams
from .sparse import BlockMatrix2x2, DenseLU, SpectralEstimate, power_iteration_spectral_radius

#: dense stability scans refuse larger stacked systems
DENSE_CAP = 2000


@dataclass
class DiagnosticsRecord:
    step: int
    t: float
    dt: float
    energy: float
    mass: float
    n_min: float
    n_max: float
    dissipation: float
    entropy: float
    picard_iters: int
    cfl_ratio: float
    phi_h1_sq: float = float("nan")

    CSV_COLUMNS = (
        "step",
        "t",
        "dt",
        "energy",
        "mass",
        "n_min",
        "n_max",
        "dissipation",
        "entropy",
        "picard_iters",
        "cfl_ratio",
    )

    def csv_row(self) -> list[str]:
        return [
            str(getattr(self, c)) if c in ("step", "picard_iters") else repr(float(getattr(self, c)))
            for c in self.CSV_COLUMNS
        ]


def projected_dpsi_plus(space: FemSpace, params: ModelParams, n, projection_mode: str = "interpolation"):
    """Nodal values of the projected ``psi_plus'(n)``."""
    from .fem import lumped_h1_project

    n = np.asarray(n, dtype=float)
    if not params.regularized:
        # the bounds invariant keeps iterates below 1; guard exact hits
        n = np.minimum(n, 1.0 - 1e-12)
    values = params.dpsi_plus(n)
    if projection_mode == "interpolation":
        return values
    if projection_mode == "lumped_h1":
        return lumped_h1_project(space, values)
    raise ValueError(f"unknown projection mode {projection_mode!r}")


def discrete_energy(
    space: FemSpace,
    params: ModelParams,
    n,
    phi,
    phi_norm: str = "lumped",
) -> float:
    """``gamma/2 |n - (sigma/gamma) phi|_1^2 + sigma/(2 gamma) ||phi||^2
    + (psi_plus(n) + psi_minus(n - (sigma/gamma) phi) + k, 1)^h``.

    ``phi_norm`` selects the lumped (``"lumped"``) or consistent
    (``"consistent"``) mass for the ``||phi||^2`` term. The lumped choice is
    the one for which the nonlinear scheme dissipates exactly.
    """
    n = np.asarray(n, dtype=float)
    phi = np.asarray(phi, dtype=float)
    g, s = params.gamma, params.sigma
    w = n - (s / g) * phi
    m = space.lumped_diag
    grad = 0.5 * g * float(w @ (space.stiffness @ w))
    if phi_norm == "lumped":
        l2 = float(np.sum(m * phi * phi))
    elif phi_norm == "consistent":
        l2 = float(phi @ (space.mass @ phi))
    else:
        raise ValueError(f"unknown phi_norm {phi_norm!r}")
    pot = params.psi_plus(n) + physics.psi_minus_ext(w, params.n_star) + params.k_offset
    return grad + 0.5 * (s / g) * l2 + float(np.sum(m * pot))


def dissipation(
    space: FemSpace,
    params: ModelParams,
    n_old,
    phi_new,
    n_new,
    dt: float,
    projection_mode: str = "interpolation",
) -> float:
    """``dt * xi^T U xi`` with ``xi = phi_new + Pi(psi_plus'(n_new))`` and
    ``U`` upwinded from ``(n_old, xi)``."""
    xi = np.asarray(phi_new, dtype=float) + projected_dpsi_plus(space, params, n_new, projection_mode)
    B = space.upwind_coefficients(n_old, xi, params.epsilon)
    # xi^T U xi = -sum_edges B Q_ij (xi_i - xi_j)^2, nonnegative on acute meshes
    diff = xi[space.edge_i] - xi[space.edge_j]
    return float(-dt * np.sum(B * space.edge_q * diff * diff))


def entropy_integral(space: FemSpace, n, epsilon: float) -> float:
    """Lumped integral ``(phi_eps(n), 1)^h``."""
    return float(np.sum(space.lumped_diag * physics.entropy_phi_eps(n, epsilon)))


def mass(space: FemSpace, n) -> float:
    return float(np.sum(space.lumped_diag * np.asarray(n, dtype=float)))


# -- amplification matrix ------------------------------------------------------


def build_amplification_matrix(
    space: FemSpace, params: ModelParams, dt: float, n_ref, phi_ref
) -> tuple[BlockMatrix2x2, BlockMatrix2x2]:
    """Blocks ``(H1, H2)`` of the linear scheme's one-step map
    ``H1 X^{k+1} = H2 X^k`` on the stacked state ``X = (n, phi)``.

    ``L`` uses the coefficient ``b(n_ref) psi_plus''(n_ref)`` and ``U`` is
    upwinded on the differences of ``phi_ref``.
    """
    n_ref = np.asarray(n_ref, dtype=float)
    phi_ref = np.asarray(phi_ref, dtype=float)
    g, s, ns = params.gamma, params.sigma, params.n_star
    Q = space.stiffness
    Ml = space.lumped_mass
    Z = sp.csr_matrix(Q.shape)
    L = space.weighted_stiffness(params.mobility(n_ref) * params.d2psi_plus(n_ref))
    U = space.upwind_matrix_from_coefficients(space.upwind_coefficients(n_ref, phi_ref, params.epsilon))
    H1 = BlockMatrix2x2(Z, (s * Q + Ml).tocsr(), (Ml + dt * L).tocsr(), (dt * U).tocsr())
    H2 = BlockMatrix2x2((g * Q - (1 - ns) * Ml).tocsr(), ((s / g) * (1 - ns) * Ml).tocsr(), Ml, Z)
    return H1, H2


@dataclass
class StabilityScanResult:
    dt: np.ndarray
    rho: np.ndarray
    converged: np.ndarray
    sigma: float
    mesh_descriptor: str
    threshold: float = 1.0 + 1e-6

    @property
    def dt_star(self) -> Optional[float]:
        """Largest scanned dt whose spectral radius does not exceed the threshold."""
        ok = np.flatnonzero(self.rho <= self.threshold)
        return float(self.dt[ok[-1]]) if ok.size else None


def default_reference_state(space: FemSpace, params: ModelParams, mean: float = 0.3, amplitude: float = 0.05):
    """Smooth state ``n = mean + amplitude cos(2 pi x / L)`` (times the same
    factor in y for 2D) with its consistent ``phi``."""
    from .solvers import solve_phi0

    n_ref = smooth_profile(space, mean, amplitude)
    return n_ref, solve_phi0(space, params, n_ref)


def smooth_profile(space: FemSpace, mean: float, amplitude: float) -> np.ndarray:
    lo = space.mesh.vertices.min(axis=0)
    span = space.mesh.vertices.max(axis=0) - lo
    if space.dimension == 1:
        return interpolate_nodal(space, lambda x: mean + amplitude * np.cos(2 * np.pi * (x - lo[0]) / span[0]))
    return interpolate_nodal(
        space,
        lambda x, y: mean
        + amplitude * np.cos(2 * np.pi * (x - lo[0]) / span[0]) * np.cos(2 * np.pi * (y - lo[1]) / span[1]),
    )


def spectral_radius(space, params, dt, n_ref, phi_ref, tol=1e-10, max_iter=2000, seed=0, method="auto"):
    """``rho(H1^{-1} H2)`` for one time step.

    ``method="power"`` runs power iteration on ``x -> H1^{-1} H2 x``. Near
    ``dt = 0`` the spectrum clusters at 1 and power iteration stalls;
    ``"auto"`` then falls back to a dense eigensolve of the same operator
    (the stacked system is below the dense cap anyway). ``"dense"`` skips
    the power iteration.
    """
    if method not in ("auto", "power", "dense"):
        raise ValueError(f"unknown method {method!r}")
    H1, H2 = build_amplification_matrix(space, params, dt, n_ref, phi_ref)
    size = H1.shape[0]
    if size > DENSE_CAP:
        raise ValueError(f"stacked system of size {size} exceeds the dense cap {DENSE_CAP}; use a smaller mesh")
    lu = DenseLU(H1.to_dense())
    H2d = H2.to_dense()
    if method != "dense":
        est = power_iteration_spectral_radius(lambda x: lu.solve(H2d @ x), size, tol=tol, max_iter=max_iter, seed=seed)
        if est.converged or method == "power":
            return est
    rho = float(np.max(np.abs(np.linalg.eigvals(lu.solve(H2d)))))
    return SpectralEstimate(rho, True, 0)


def stability_scan(
    space: FemSpace,
    params: ModelParams,
    dt_grid: Sequence[float],
    n_ref=None,
    phi_ref=None,
    tol: float = 1e-10,
    max_iter: int = 2000,
    method: str = "auto",
) -> StabilityScanResult:
    """Spectral radius of ``H1^{-1} H2`` over an increasing grid of time steps."""
    dt_grid = np.asarray(dt_grid, dtype=float)
    if dt_grid.ndim != 1 or dt_grid.size == 0:
        raise ValueError("dt grid must be a non-empty 1D sequence")
    if np.any(np.diff(dt_grid) <= 0):
        raise ValueError("dt grid must be strictly increasing")
    if np.any(dt_grid <= 0):
        raise ValueError("dt values must be positive")
    if 2 * space.n_dofs > DENSE_CAP:
        raise ValueError(f"stacked system of size {2 * space.n_dofs} exceeds the dense cap {DENSE_CAP}; use a smaller mesh")
    if n_ref is None or phi_ref is None:
        n_ref, phi_ref = default_reference_state(space, params)
    rho = np.empty(dt_grid.size)
    conv = np.empty(dt_grid.size, dtype=bool)
    for k, dt in enumerate(dt_grid):
        est = spectral_radius(space, params, dt, n_ref, phi_ref, tol=tol, max_iter=max_iter, method=method)
        rho[k] = est.value
        conv[k] = est.converged
    from .mesh import compute_quality

    desc = f"d={space.dimension}, nodes={space.n_dofs}, h={compute_quality(space.mesh).h:g}"
    return StabilityScanResult(dt_grid, rho, conv, params.sigma, desc)


# -- refinement study ----------------------------------------------------------


@dataclass
class ConvergenceRow:
    h: float
    dt: float
    diff_to_next: float


def convergence_study(
    params: ModelParams,
    config,
    mesh_sizes: Sequence[int],
    dt_rule=None,
    length: float = 1.0,
    amplitude: float = 0.05,
) -> list[ConvergenceRow]:
    """Run to ``config.t_end`` on nested 1D meshes and report
    ``||n_h - n_{h/2}||_0`` on the coarser mesh via nodal restriction.

    The initial profile comes from ``config`` (cosine or constant) with
    amplitude ``amplitude``.

    ``dt_rule(h)`` defaults to ``dt = config.dt_initial * (h / h0)^2`` with
    ``h0`` the coarsest mesh size.
    """
    from .mesh import build_interval_mesh
    from .solvers import run

    if config.initial_profile == "random":
        raise ValueError("the refinement study needs a deterministic initial profile (cosine or constant)")
    sizes = sorted(int(s) for s in mesh_sizes)
    for a, b in zip(sizes, sizes[1:]):
        if b % a:
            raise ValueError("mesh sizes must be nested (each divides the next)")
    h0 = length / sizes[0]
    if dt_rule is None:

        def dt_rule(h):
            return config.dt_initial * (h / h0) ** 2

    finals = []
    for N in sizes:
        space = FemSpace(build_interval_mesh(length, N))
        h = length / N
        dt = dt_rule(h)
        cfg = replace(config, dt_initial=dt, dt_max=dt, perturbation_amplitude=amplitude)
        result = run(space, params, cfg)
        finals.append((space, h, dt, result.state.n))
    rows = []
    for (sc, h, dt, nc), (_, _, _, nf) in zip(finals, finals[1:]):
        stride = (nf.size - 1) // (nc.size - 1)
        diff = nc - nf[::stride]
        rows.append(ConvergenceRow(h, dt, math.sqrt(max(float(diff @ (sc.mass @ diff)), 0.0))))
    return rows
