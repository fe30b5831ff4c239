"""Independent reference implementations used by the tests.

Nothing here imports the assembly code under test: the finite-volume step
works on the dual cells of a uniform 1D grid with its own tridiagonal
solves, and the entropy oracle integrates 1 / b_eps numerically.
"""

import numpy as np
from scipy import integrate
from scipy.linalg import solve_banded


def _tridiag(lower, diag, upper, rhs):
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs)


def fv_linear_step(n, phi_old, dt, h, gamma, sigma, n_star):
    """One step of the linear upwind scheme written as a dual-cell finite
    volume method on a uniform 1D grid with zero-flux boundaries."""
    n = np.asarray(n, dtype=float)
    N = n.size
    vol = np.full(N, h)
    vol[0] = vol[-1] = h / 2

    def neg_laplacian_bands(coef):
        # -(d/dx) coef (d/dx) with face coefficients coef[i] on face i+1/2
        c = coef / h
        diag = np.zeros(N)
        diag[:-1] += c
        diag[1:] += c
        return -c, diag, -c

    def apply(bands, v):
        lo, di, up = bands
        out = di * v
        out[1:] += lo * v[:-1]
        out[:-1] += up * v[1:]
        return out

    ones = np.ones(N - 1)
    lap = neg_laplacian_bands(ones)

    # relaxation equation for phi, explicit concave part
    w = n - sigma / gamma * phi_old
    rhs = gamma * apply(lap, n) + vol * (-(1 - n_star) * (w + 1))
    lo, di, up = lap
    phi = _tridiag(sigma * lo, sigma * di + vol, sigma * up, rhs)

    # upwind face mobility, picked from the side phi flows out of
    left, right = n[:-1], n[1:]
    down = phi[:-1] - phi[1:] > 0
    B = np.where(down, left * (1 - right) ** 2, right * (1 - left) ** 2)
    flux = -B * (phi[1:] - phi[:-1]) / h  # face flux left -> right
    div = np.zeros(N)
    div[:-1] += flux
    div[1:] -= flux

    # implicit diffusion from the convex part, face value = mean of the nodes
    c = n * (1 - n) ** 2 * ((1 - n_star) / (1 - n) ** 2 - 2 * n)
    face = np.maximum(0.5 * (c[:-1] + c[1:]), 0.0)
    lo, di, up = neg_laplacian_bands(face)
    n_new = _tridiag(dt * lo, vol + dt * di, dt * up, vol * n - dt * div)
    return n_new, phi


def b_eps(s, eps):
    s = min(max(s, eps), 1 - eps)
    return s * (1 - s) ** 2


def entropy_quadrature(s, eps):
    """phi_eps(s) = int_{1/2}^{s} (s - u) / b_eps(u) du, the double
    antiderivative of 1 / b_eps vanishing with its slope at 1/2."""
    pts = [p for p in (eps, 1 - eps) if min(s, 0.5) < p < max(s, 0.5)]
    val, _ = integrate.quad(lambda u: (s - u) / b_eps(u, eps), 0.5, s, points=pts or None, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def entropy_slope_quadrature(s, eps):
    pts = [p for p in (eps, 1 - eps) if min(s, 0.5) < p < max(s, 0.5)]
    val, _ = integrate.quad(lambda u: 1.0 / b_eps(u, eps), 0.5, s, points=pts or None, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def dense_spectral_radius(A):
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(A, dtype=float)))))


def inverse_nonnegative(A):
    """Brute-force M-matrix check for small dense Z-matrices."""
    A = np.asarray(A, dtype=float)
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return False
    return bool(np.all(inv >= -1e-12))
