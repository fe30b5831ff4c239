import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import entropy_quadrature
from rdch import physics
from rdch.physics import CONVEXITY_LIMIT, ModelParams, ParameterError, SingularityError

NS = 0.6


def test_psi_plus_at_zero():
    assert physics.psi_plus(0.0, NS) == 0.0
    assert physics.dpsi_plus(0.0, NS) == pytest.approx(0.4)
    assert physics.d2psi_plus(0.0, NS) == pytest.approx(0.4)


def test_dpsi_plus_half():
    assert physics.dpsi_plus(0.5, NS) == pytest.approx(0.55)


def test_singularity():
    assert physics.psi_plus(1 - 1e-15, NS) > 10
    for f in (physics.psi_plus, physics.dpsi_plus, physics.d2psi_plus):
        with pytest.raises(SingularityError):
            f(np.array([0.2, 1.0]), NS)


def test_psi_minus():
    assert physics.dpsi_minus_ext(0.0, NS) == pytest.approx(-0.4)
    assert physics.dpsi_minus_ext(-1.0, NS) == 0.0
    assert np.all(physics.d2psi_minus_ext(np.linspace(-3, 3, 5), NS) < 0)
    s = np.linspace(-2, 2, 9)
    assert np.allclose(physics.psi_minus_ext(s, NS), -(1 - NS) * (s**2 / 2 + s))


def test_potential_reproduces_closed_form():
    n = np.linspace(0, 0.99, 200)
    expect = -(1 - NS) * np.log(1 - n) - n**3 / 3 - (1 - NS) * n**2 / 2 - (1 - NS) * n + 0.25
    np.testing.assert_allclose(physics.potential(n, NS, 0.25), expect, atol=1e-12)


def test_single_well_minimum_at_n_star():
    n = np.linspace(0.01, 0.95, 2000)
    psi = physics.potential(n, NS)
    assert n[np.argmin(psi)] == pytest.approx(NS, abs=1e-3)


def _central(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_derivatives_match_finite_differences():
    x = np.linspace(0.0, 0.95, 50)
    h = 1e-6
    d1 = _central(lambda s: physics.psi_plus(s, NS), x, h)
    d2 = _central(lambda s: physics.dpsi_plus(s, NS), x, h)
    np.testing.assert_allclose(d1, physics.dpsi_plus(x, NS), rtol=1e-6)
    np.testing.assert_allclose(d2, physics.d2psi_plus(x, NS), rtol=1e-6)


@pytest.mark.parametrize("eps", [0.1, 0.01])
def test_regularized_derivatives_match_finite_differences(eps):
    x = np.linspace(-2, 3, 50)
    # keep stencils off the two kinks of the second derivative
    x = x[(np.abs(x - eps) > 1e-4) & (np.abs(x - 1 + eps) > 1e-4)]
    h = 1e-6
    d1 = _central(lambda s: physics.psi_plus_eps(s, NS, eps), x, h)
    d2 = _central(lambda s: physics.dpsi_plus_eps(s, NS, eps), x, h)
    np.testing.assert_allclose(d1, physics.dpsi_plus_eps(x, NS, eps), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(d2, physics.d2psi_plus_eps(x, NS, eps), rtol=1e-6)


@pytest.mark.parametrize("eps", [0.1, 0.05, 0.01])
def test_regularized_matches_inside_and_is_c1(eps):
    x = np.linspace(eps, 1 - eps, 101)
    assert np.array_equal(physics.psi_plus_eps(x, NS, eps), physics.psi_plus(x, NS))
    assert np.array_equal(physics.dpsi_plus_eps(x, NS, eps), physics.dpsi_plus(x, NS))
    assert np.array_equal(physics.d2psi_plus_eps(x, NS, eps), physics.d2psi_plus(x, NS))
    for p in (eps, 1 - eps):
        for f in (physics.psi_plus_eps, physics.dpsi_plus_eps):
            lo, hi = f(p - 1e-13, NS, eps), f(p + 1e-13, NS, eps)
            assert abs(hi - lo) < 1e-9


def test_regularized_clamped_curvature():
    assert physics.d2psi_plus_eps(2.0, NS, 0.1) == pytest.approx(0.4 / 0.01 - 1.8)


def test_regularized_quadratic_growth():
    eps = 0.1
    n = np.linspace(-2, 10, 4001)
    lower = (1 - NS) / (2 * eps**2) * np.maximum(n - 1, 0) ** 2
    # fitted constant: the true curvature above 1-eps is (1-n*)/eps^2 - 2(1-eps)
    C = float(np.max(lower - physics.psi_plus_eps(n, NS, eps)))
    assert C < 30
    assert np.all(physics.psi_plus_eps(n, NS, eps) >= lower - C)


def test_mobility_values():
    assert physics.mobility(0.0) == 0.0 and physics.mobility(1.0) == 0.0
    assert physics.mobility(0.5) == pytest.approx(0.125)
    assert physics.mobility_eps(-5.0, 0.1) == pytest.approx(0.081)


@given(st.floats(-50, 50), st.sampled_from([0.01, 0.05, 0.1, 0.3]))
def test_mobility_eps_bounds(n, eps):
    lo, hi = physics.mobility_eps_bounds(eps)
    assert 0 < lo <= physics.mobility_eps(n, eps) <= hi
    assert hi == pytest.approx(max(physics.mobility(1 / 3), physics.mobility(eps), physics.mobility(1 - eps)))


def test_mobility_eps_lower_bound_is_the_upper_clamp():
    # b(1-eps) < b(eps), so b(eps) is not a lower bound of b_eps
    eps = 0.1
    assert physics.mobility_eps(0.95, eps) < physics.mobility(eps)
    assert physics.mobility_eps_bounds(eps)[0] == pytest.approx(physics.mobility(1 - eps))


@pytest.mark.parametrize("eps", [0.1, 0.05, 0.01])
def test_entropy_normalization_and_convexity(eps):
    assert physics.entropy_phi_eps(0.5, eps) == pytest.approx(0.0, abs=1e-15)
    assert physics.entropy_dphi_eps(0.5, eps) == pytest.approx(0.0, abs=1e-15)
    s = np.linspace(-3, 4, 500)
    assert np.all(physics.entropy_d2phi_eps(s, eps) > 0)
    assert np.all(np.diff(physics.entropy_dphi_eps(s, eps)) > 0)


def test_entropy_matches_quadrature_at_quarter():
    assert physics.entropy_phi_eps(0.25, 0.05) == pytest.approx(entropy_quadrature(0.25, 0.05), abs=1e-8)


def test_entropy_requires_positive_eps():
    with pytest.raises(ParameterError):
        physics.entropy_phi_eps(0.3, 0.0)


def test_params_validation():
    with pytest.raises(ParameterError):
        ModelParams(sigma=1.0)
    with pytest.raises(ParameterError):
        ModelParams(n_star=1.0)
    with pytest.raises(ParameterError):
        ModelParams(epsilon=0.5)
    with pytest.raises(ParameterError):
        ModelParams(gamma=-1.0)
    with pytest.warns(RuntimeWarning, match="19/27"):
        ModelParams(n_star=0.75)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ModelParams(n_star=CONVEXITY_LIMIT)


def test_params_dispatch():
    p, q = ModelParams(), ModelParams(epsilon=0.1)
    assert not p.regularized and q.regularized
    assert q.dpsi_plus(3.0) == physics.dpsi_plus_eps(3.0, 0.6, 0.1)
    assert p.mobility(0.3) == physics.mobility(0.3)
    assert q.mobility(-1.0) == physics.mobility(0.1)
