"""Single-well logarithmic potential, degenerate mobility and their
regularized variants.

All functions are vectorized over ``n``. The potential splits as
``psi = psi_plus + psi_minus + k`` with ``psi_plus`` convex (for
``n_star <= 19/27``) and ``psi_minus`` concave and quadratic.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

#: above this n_star the convex part loses convexity near n = 0
CONVEXITY_LIMIT = 1.0 - (2.0 / 3.0) ** 3


class SingularityError(ValueError):
    """The unregularized potential was evaluated at n >= 1."""


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Physical and regularization parameters.

    ``epsilon = 0`` selects the singular potential and the degenerate
    mobility; ``epsilon > 0`` the regularized problem.
    """

    gamma: float = 0.014**2
    sigma: float = 5e-5
    n_star: float = 0.6
    k_offset: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.sigma < self.gamma:
            raise ParameterError(f"sigma must satisfy 0 < sigma < gamma, got sigma={self.sigma}")
        if not 0 < self.n_star < 1:
            raise ParameterError(f"n_star must lie in (0, 1), got {self.n_star}")
        if not 0 <= self.epsilon < 0.5:
            raise ParameterError(f"epsilon must lie in [0, 1/2), got {self.epsilon}")
        if not self.sigma * (1 - self.n_star) / self.gamma < 1:
            raise ParameterError("sigma * (1 - n_star) / gamma must be < 1")
        if self.n_star > CONVEXITY_LIMIT:
            warnings.warn(
                f"n_star={self.n_star} > 19/27: psi_plus is not convex on [0, 1)",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def regularized(self) -> bool:
        return self.epsilon > 0

    def dpsi_plus(self, n):
        """``psi_plus'`` of the active problem (regularized iff epsilon > 0)."""
        if self.regularized:
            return dpsi_plus_eps(n, self.n_star, self.epsilon)
        return dpsi_plus(n, self.n_star)

    def d2psi_plus(self, n):
        if self.regularized:
            return d2psi_plus_eps(n, self.n_star, self.epsilon)
        return d2psi_plus(n, self.n_star)

    def psi_plus(self, n):
        if self.regularized:
            return psi_plus_eps(n, self.n_star, self.epsilon)
        return psi_plus(n, self.n_star)

    def mobility(self, n):
        if self.regularized:
            return mobility_eps(n, self.epsilon)
        return mobility(n)


def _check_below_one(n):
    n = np.asarray(n, dtype=float)
    if np.any(n >= 1.0):
        raise SingularityError("logarithmic potential evaluated at n >= 1")
    return n


def psi_plus(n, n_star):
    n = _check_below_one(n)
    return -(1 - n_star) * np.log1p(-n) - n**3 / 3


def dpsi_plus(n, n_star):
    n = _check_below_one(n)
    return (1 - n_star) / (1 - n) - n**2


def d2psi_plus(n, n_star):
    n = _check_below_one(n)
    return (1 - n_star) / (1 - n) ** 2 - 2 * n


def psi_minus_ext(s, n_star):
    """Concave part, extended to all of R as a quadratic (linear derivative)."""
    s = np.asarray(s, dtype=float)
    return -(1 - n_star) * (0.5 * s**2 + s)


def dpsi_minus_ext(s, n_star):
    s = np.asarray(s, dtype=float)
    return -(1 - n_star) * (s + 1)


def d2psi_minus_ext(s, n_star):
    return -(1 - n_star) * np.ones_like(np.asarray(s, dtype=float))


def potential(n, n_star, k_offset=0.0):
    """Full single-well potential on [0, 1)."""
    return psi_plus(n, n_star) + psi_minus_ext(n, n_star) + k_offset


# Regularized convex part: the second derivative is frozen outside
# [eps, 1 - eps] and integrated with C^1 matching to the exact psi_plus.


def _eps_branches(n, eps):
    n = np.asarray(n, dtype=float)
    lo, hi = eps, 1.0 - eps
    return n, lo, hi, n < lo, n > hi


def d2psi_plus_eps(n, n_star, eps):
    n, lo, hi, below, above = _eps_branches(n, eps)
    mid = np.clip(n, lo, hi)
    return (1 - n_star) / (1 - mid) ** 2 - 2 * mid


def dpsi_plus_eps(n, n_star, eps):
    n, lo, hi, below, above = _eps_branches(n, eps)
    mid = np.clip(n, lo, hi)
    out = (1 - n_star) / (1 - mid) - mid**2
    out = out + np.where(below, d2psi_plus(lo, n_star) * (n - lo), 0.0)
    out = out + np.where(above, d2psi_plus(hi, n_star) * (n - hi), 0.0)
    return out


def psi_plus_eps(n, n_star, eps):
    n, lo, hi, below, above = _eps_branches(n, eps)
    mid = np.clip(n, lo, hi)
    out = -(1 - n_star) * np.log1p(-mid) - mid**3 / 3
    dlo, dhi = n - lo, n - hi
    out = out + np.where(
        below, dpsi_plus(lo, n_star) * dlo + 0.5 * d2psi_plus(lo, n_star) * dlo**2, 0.0
    )
    out = out + np.where(
        above, dpsi_plus(hi, n_star) * dhi + 0.5 * d2psi_plus(hi, n_star) * dhi**2, 0.0
    )
    return out


def mobility(n):
    """Degenerate mobility ``n (1 - n)^2``, evaluated as a polynomial on R."""
    n = np.asarray(n, dtype=float)
    return n * (1 - n) ** 2


def mobility_eps(n, eps):
    """Mobility frozen at ``b(eps)`` below eps and ``b(1 - eps)`` above 1 - eps."""
    return mobility(np.clip(np.asarray(n, dtype=float), eps, 1.0 - eps))


def mobility_eps_bounds(eps) -> tuple[float, float]:
    """Lower and upper bounds of ``mobility_eps`` over R."""
    lo = min(mobility(eps), mobility(1 - eps))
    candidates = [mobility(eps), mobility(1 - eps)]
    if eps <= 1 / 3 <= 1 - eps:
        candidates.append(mobility(1 / 3))
    return float(lo), float(max(candidates))


# Entropy with phi'' = 1 / b_eps. On [eps, 1 - eps],
# 1/(s (1-s)^2) = 1/s + 1/(1-s) + 1/(1-s)^2 integrates twice to
# s log(s / (1 - s)) + c1 s + c0; c1 = -2, c0 = 1 give phi(1/2) = phi'(1/2) = 0.


def _entropy_core(s):
    return s * np.log(s / (1 - s)) - 2 * s + 1


def _entropy_core_d1(s):
    return np.log(s / (1 - s)) + 1 / (1 - s) - 2


def entropy_phi_eps(s, eps):
    if not eps > 0:
        raise ParameterError("entropy requires epsilon > 0")
    s, lo, hi, below, above = _eps_branches(s, eps)
    mid = np.clip(s, lo, hi)
    out = _entropy_core(mid)
    dlo, dhi = s - lo, s - hi
    out = out + np.where(below, _entropy_core_d1(lo) * dlo + 0.5 * dlo**2 / mobility(lo), 0.0)
    out = out + np.where(above, _entropy_core_d1(hi) * dhi + 0.5 * dhi**2 / mobility(hi), 0.0)
    return out


def entropy_dphi_eps(s, eps):
    if not eps > 0:
        raise ParameterError("entropy requires epsilon > 0")
    s, lo, hi, below, above = _eps_branches(s, eps)
    out = _entropy_core_d1(np.clip(s, lo, hi))
    out = out + np.where(below, (s - lo) / mobility(lo), 0.0)
    out = out + np.where(above, (s - hi) / mobility(hi), 0.0)
    return out


def entropy_d2phi_eps(s, eps):
    return 1.0 / mobility_eps(s, eps)
