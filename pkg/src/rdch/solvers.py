"""Time integration of the relaxed degenerate Cahn-Hilliard system.

Two schemes are provided:

* ``nonlinear``: Picard iteration on the implicit-in-potential scheme with
  an explicit lumped update of the density inside each iterate;
* ``linear``: the semi-implicit scheme with one SPD solve for ``phi`` and
  one M-matrix solve for ``n`` per step.

Both upwind the degenerate mobility along mesh edges and adapt the time
step so that the positivity (CFL-type) condition holds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import physics
from .diagnostics import (
    DiagnosticsRecord,
    discrete_energy,
    dissipation,
    entropy_integral,
    mass,
    projected_dpsi_plus,
    smooth_profile,
)
from .fem import FemSpace, h1_seminorm_sq
from .mesh import MeshQuality, compute_quality
from .physics import ModelParams
from .sparse import SolverError, cg_solve

log = logging.getLogger(__name__)

MASS_RTOL = 1e-10


class CFLError(SolverError):
    """The time step fell below its floor without meeting the positivity condition."""


class PicardError(SolverError):
    pass


class InvariantError(RuntimeError):
    """An accepted step broke mass conservation or the density bounds."""


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "linear"
    dt_initial: float = 1.96e-5
    dt_max: Optional[float] = None
    t_end: float = 1.0
    picard_tol: float = 1e-8
    picard_max_iter: int = 50
    picard_relaxation: float = 1.0
    cfl_safety: float = 0.9
    dt_growth: float = 1.2
    dt_shrink: float = 0.5
    dt_floor_halvings: int = 20
    projection_mode: str = "interpolation"
    linear_solver: str = "direct"
    cg_tol: float = 1e-13
    cg_max_iter: int = 5000
    rng_seed: int = 42
    initial_mean: float = 0.3
    perturbation_amplitude: float = 0.05
    initial_profile: str = "random"
    phi_norm: str = "lumped"
    phi_coupling: str = "midpoint"

    def __post_init__(self):
        if self.scheme not in ("linear", "nonlinear"):
            raise ValueError(f"scheme must be 'linear' or 'nonlinear', got {self.scheme!r}")
        if self.projection_mode not in ("interpolation", "lumped_h1"):
            raise ValueError(f"unknown projection_mode {self.projection_mode!r}")
        if self.phi_coupling not in ("midpoint", "implicit"):
            raise ValueError(f"unknown phi_coupling {self.phi_coupling!r}")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError(f"unknown linear_solver {self.linear_solver!r}")
        if self.initial_profile not in ("random", "cosine", "constant"):
            raise ValueError(f"unknown initial_profile {self.initial_profile!r}")
        for name in ("dt_initial", "picard_tol", "cg_tol", "cfl_safety", "dt_growth", "dt_shrink"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if not self.cfl_safety < 1:
            raise ValueError("cfl_safety must be < 1")
        if not self.dt_shrink < 1:
            raise ValueError("dt_shrink must be < 1")
        if not 0 < self.picard_relaxation <= 1:
            raise ValueError("picard_relaxation must lie in (0, 1]")
        if self.dt_max is not None and self.dt_max < self.dt_initial:
            raise ValueError("dt_max must be >= dt_initial")

    @property
    def dt_cap(self) -> float:
        return self.dt_initial if self.dt_max is None else self.dt_max

    @property
    def dt_min(self) -> float:
        return self.dt_initial * 2.0 ** (-self.dt_floor_halvings)


@dataclass
class State:
    n: np.ndarray
    phi: np.ndarray
    t: float = 0.0
    step: int = 0
    dt_current: float = 0.0


@dataclass
class StepInfo:
    dt: float
    picard_iters: int
    cfl_ratio: float
    xi: np.ndarray
    n_old: np.ndarray


# -- initial data --------------------------------------------------------------


def make_initial_density(space: FemSpace, config: SolverConfig) -> np.ndarray:
    """Initial nodal density.

    ``random``: ``n0 + a (u - 1/2)`` with ``u`` uniform on [0, 1) drawn from
    numpy's PCG64 generator seeded with ``rng_seed``; ``cosine``: a smooth
    deterministic profile ``n0 + a cos(2 pi x / L)``; ``constant``: ``n0``.
    Values are clamped to ``[0, 1 - 1e-6]``.
    """
    n0, a = config.initial_mean, config.perturbation_amplitude
    if not 0 < n0 < 1:
        raise ValueError(f"initial_mean must lie in (0, 1), got {n0}")
    if a < 0:
        raise ValueError("perturbation_amplitude must be nonnegative")
    if config.initial_profile == "random":
        half = 0.5 * a
    elif config.initial_profile == "cosine":
        half = a
    else:
        half = 0.0
    if n0 - half < 0 or n0 + half > 1:
        raise ValueError("perturbation amplitude pushes the initial density outside (0, 1)")
    if config.initial_profile == "random":
        rng = np.random.Generator(np.random.PCG64(config.rng_seed))
        n = n0 + a * (rng.random(space.n_dofs) - 0.5)
    elif config.initial_profile == "cosine":
        n = smooth_profile(space, n0, a)
    else:
        n = np.full(space.n_dofs, float(n0))
    return np.clip(n, 0.0, 1.0 - 1e-6)


def solve_phi0(space: FemSpace, params: ModelParams, n0) -> np.ndarray:
    """Initial ``phi`` from the relaxation equation with ``phi`` on both sides.

    ``psi_minus'`` is affine, so the fixed point reduces to one SPD system
    ``[sigma Q + (1 - (1 - n*) sigma / gamma) M_l] phi = gamma Q n0 - (1 - n*) M_l (n0 + 1)``.
    """
    n0 = np.asarray(n0, dtype=float)
    g, s, ns = params.gamma, params.sigma, params.n_star
    c = 1.0 - (1 - ns) * s / g
    Q, m = space.stiffness, space.lumped_diag
    A = (s * Q + c * sp.diags(m)).tocsc()
    rhs = g * (Q @ n0) - (1 - ns) * m * (n0 + 1)
    phi = spla.spsolve(A, rhs)
    # residual of the original (unreduced) equation
    res = s * (Q @ phi) + m * phi - g * (Q @ n0) - m * physics.dpsi_minus_ext(n0 - (s / g) * phi, ns)
    scale = max(np.linalg.norm(rhs), 1e-300)
    if np.linalg.norm(res) > 1e-10 * max(scale, 1.0):
        raise SolverError("initial phi solve did not satisfy its equation", residual=float(np.linalg.norm(res)))
    return phi


def initial_state(space: FemSpace, params: ModelParams, config: SolverConfig) -> State:
    n0 = make_initial_density(space, config)
    return State(n=n0, phi=solve_phi0(space, params, n0), t=0.0, step=0, dt_current=config.dt_initial)


# -- time step control -----------------------------------------------------------


def cfl_rate(quality: MeshQuality, xi, edges, d: int) -> float:
    """``(d + 1) G_h / kappa_h^2 * max over directed edges of (xi_j - xi_i)``."""
    xi = np.asarray(xi, dtype=float)
    jump = float(np.max(np.abs(xi[edges[:, 1]] - xi[edges[:, 0]]))) if len(edges) else 0.0
    return (d + 1) * quality.G_h / quality.kappa_h**2 * jump


def enforce_cfl(
    quality: MeshQuality,
    dt: float,
    xi,
    edges,
    d: int,
    safety: float,
    dt_min: float = 0.0,
    shrink: float = 0.5,
) -> tuple[float, float]:
    """Shrink ``dt`` until ``dt * rate <= safety``. Returns ``(dt, dt * rate)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    r = cfl_rate(quality, xi, edges, d)
    while dt * r > safety:
        dt *= shrink
        if dt < dt_min:
            raise CFLError(f"time step fell below {dt_min:.3e} without meeting the positivity condition (rate {r:.3e})")
    return dt, dt * r


# -- schemes -------------------------------------------------------------------


class _SPD:
    """Solver for a fixed SPD matrix: sparse LU or Jacobi-CG."""

    def __init__(self, A: sp.spmatrix, config: SolverConfig):
        self.A = sp.csr_matrix(A)
        self.config = config
        self._lu = spla.splu(self.A.tocsc()) if config.linear_solver == "direct" else None

    def solve(self, b: np.ndarray, x0=None) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(b)
        return cg_solve(self.A, b, tol=self.config.cg_tol, max_iter=self.config.cg_max_iter, x0=x0)


class Scheme:
    """Per-run operator cache shared by consecutive steps."""

    def __init__(self, space: FemSpace, params: ModelParams, config: SolverConfig):
        self.space = space
        self.params = params
        self.config = config
        self.quality = compute_quality(space.mesh)
        self.edges = space.mesh.edges
        self.Ml = space.lumped_diag
        self.Q = space.stiffness
        self.phi_solver = _SPD(params.sigma * self.Q + space.lumped_mass, config)

    def _phi_rhs_base(self, state: State) -> np.ndarray:
        p = self.params
        return self.Ml * physics.dpsi_minus_ext(state.n - (p.sigma / p.gamma) * state.phi, p.n_star)

    def _l2(self, v: np.ndarray) -> float:
        return math.sqrt(max(float(v @ (self.space.mass @ v)), 0.0))

    def _check_invariants(self, n_old: np.ndarray, n_new: np.ndarray, strict_upper: bool):
        m0, m1 = mass(self.space, n_old), mass(self.space, n_new)
        if abs(m1 - m0) > MASS_RTOL * max(abs(m0), 1e-300):
            raise InvariantError(f"mass drift {abs(m1 - m0) / abs(m0):.3e} in an accepted step")
        if not self.params.regularized:
            lo, hi = float(n_new.min()), float(n_new.max())
            if lo < -1e-12 or hi > 1.0 or (strict_upper and hi >= 1.0):
                raise InvariantError(f"density bounds violated after an accepted step: [{lo:.3e}, {hi:.3e}]")

    def step(self, state: State, dt: Optional[float] = None) -> tuple[State, StepInfo]:
        if self.config.scheme == "linear":
            return self.step_linear(state, dt)
        return self.step_nonlinear(state, dt)

    def step_linear(self, state: State, dt: Optional[float] = None) -> tuple[State, StepInfo]:
        space, p, cfg = self.space, self.params, self.config
        dt = state.dt_current if dt is None else dt
        phi = self.phi_solver.solve(p.gamma * (self.Q @ state.n) + self._phi_rhs_base(state), x0=state.phi)
        B = space.upwind_coefficients(state.n, phi, p.epsilon)
        dt, ratio = enforce_cfl(
            self.quality, dt, phi, self.edges, space.dimension, cfg.cfl_safety, cfg.dt_min, cfg.dt_shrink
        )
        n_safe = state.n if p.regularized else np.minimum(state.n, 1 - 1e-12)
        L = space.weighted_stiffness(p.mobility(state.n) * p.d2psi_plus(n_safe))
        A = (space.lumped_mass + dt * L).tocsr()
        rhs = self.Ml * state.n - dt * space.upwind_apply(B, phi)
        if cfg.linear_solver == "direct":
            n_new = spla.spsolve(A.tocsc(), rhs)
        else:
            n_new = cg_solve(A, rhs, tol=cfg.cg_tol, max_iter=cfg.cg_max_iter, x0=state.n)
        self._check_invariants(state.n, n_new, strict_upper=True)
        new = State(n_new, phi, state.t + dt, state.step + 1, dt)
        return new, StepInfo(dt, 1, ratio, phi, state.n)

    def step_nonlinear(self, state: State, dt: Optional[float] = None) -> tuple[State, StepInfo]:
        space, p, cfg = self.space, self.params, self.config
        dt = state.dt_current if dt is None else dt
        n_k = state.n
        base = self._phi_rhs_base(state)
        # midpoint: gamma Q (n* + n^k) / 2; implicit: gamma Q n*
        w_star = 1.0 if cfg.phi_coupling == "implicit" else 0.5
        gQnk = (1.0 - w_star) * p.gamma * (self.Q @ n_k)
        omega = cfg.picard_relaxation
        total_iters = 0
        while True:
            n_star, phi_star = n_k, state.phi
            restart = False
            res = float("inf")
            for it in range(1, cfg.picard_max_iter + 1):
                total_iters += 1
                phi_new = self.phi_solver.solve(w_star * p.gamma * (self.Q @ n_star) + gQnk + base, x0=phi_star)
                xi = phi_new + projected_dpsi_plus(space, p, n_star, cfg.projection_mode)
                B = space.upwind_coefficients(n_k, xi, p.epsilon)
                dt_ok, ratio = enforce_cfl(
                    self.quality, dt, xi, self.edges, space.dimension, cfg.cfl_safety, cfg.dt_min, cfg.dt_shrink
                )
                if dt_ok < dt:
                    # restart the whole step with the smaller time step
                    dt = dt_ok
                    restart = True
                    break
                n_new = n_k - dt * space.upwind_apply(B, xi) / self.Ml
                if omega != 1.0:
                    n_new = omega * n_new + (1 - omega) * n_star
                res = self._l2(n_new - n_star) + self._l2(phi_new - phi_star)
                n_star, phi_star = n_new, phi_new
                if res < cfg.picard_tol:
                    self._check_invariants(n_k, n_star, strict_upper=False)
                    new = State(n_star, phi_star, state.t + dt, state.step + 1, dt)
                    return new, StepInfo(dt, it, ratio, xi, n_k)
            if not restart:
                raise PicardError(
                    f"Picard iteration did not converge in {cfg.picard_max_iter} iterations at step {state.step + 1}",
                    residual=res,
                )


def step_linear(space, params, config, state, scheme: Optional[Scheme] = None):
    scheme = scheme or Scheme(space, params, replace(config, scheme="linear"))
    return scheme.step_linear(state)[0]


def step_nonlinear(space, params, config, state, scheme: Optional[Scheme] = None):
    scheme = scheme or Scheme(space, params, replace(config, scheme="nonlinear"))
    return scheme.step_nonlinear(state)[0]


# -- driver --------------------------------------------------------------------


@dataclass
class RunResult:
    state: State
    records: list = field(default_factory=list)


def make_record(space, params, config, state: State, info: Optional[StepInfo]) -> DiagnosticsRecord:
    n, phi = state.n, state.phi
    if info is None:
        diss, iters, ratio, dt = 0.0, 0, 0.0, 0.0
    else:
        diss = dissipation(space, params, info.n_old, phi, n, info.dt, config.projection_mode)
        iters, ratio, dt = info.picard_iters, info.cfl_ratio, info.dt
    ent = entropy_integral(space, n, params.epsilon) if params.regularized else float("nan")
    return DiagnosticsRecord(
        step=state.step,
        t=state.t,
        dt=dt,
        energy=discrete_energy(space, params, n, phi, config.phi_norm),
        mass=mass(space, n),
        n_min=float(n.min()),
        n_max=float(n.max()),
        dissipation=diss,
        entropy=ent,
        picard_iters=iters,
        cfl_ratio=ratio,
        phi_h1_sq=h1_seminorm_sq(space, phi) + float(phi @ (space.mass @ phi)),
    )


Sink = Callable[[State, DiagnosticsRecord], None]


def run(
    space: FemSpace,
    params: ModelParams,
    config: SolverConfig,
    sinks: Iterable[Sink] = (),
    state: Optional[State] = None,
    keep_records: bool = True,
) -> RunResult:
    """Advance from the configured initial data (or ``state``) to ``t_end``.

    Each sink is called with the state and its diagnostics record after the
    initial state and after every accepted step.
    """
    sinks = list(sinks)
    scheme = Scheme(space, params, config)
    if state is None:
        state = initial_state(space, params, config)
    records = []
    rec = make_record(space, params, config, state, None)
    if keep_records:
        records.append(rec)
    for sink in sinks:
        sink(state, rec)
    t_end = config.t_end
    while t_end - state.t > 1e-12 * max(t_end, 1.0):
        trial = state.dt_current
        dt = min(trial, t_end - state.t)
        new, info = scheme.step(state, dt)
        # a shrunk step restarts growth from the accepted dt; a step clipped
        # to t_end keeps the trial value
        base = info.dt if info.dt < dt else trial
        new.dt_current = min(base * config.dt_growth, config.dt_cap)
        state = new
        rec = make_record(space, params, config, state, info)
        if keep_records:
            records.append(rec)
        for sink in sinks:
            sink(state, rec)
    return RunResult(state, records)
