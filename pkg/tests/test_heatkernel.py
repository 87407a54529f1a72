import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fracheat.errors import DomainError, OrderingError
from fracheat.heatkernel import (big_gamma, damped_cos_integral, damped_exp_integral, damped_sin_integral,
                                 explosion_integral, explosion_lower_bound, gamma_abs2, gamma_increment, gamma_t,
                                 gamma_xi_integral, increment_bound)


def defining_integral(t, xi, r):
    re = integrate.quad(lambda s: math.exp(-s * r * r) * math.cos(xi * s), 0, t, epsabs=1e-15, epsrel=1e-14)[0]
    im = integrate.quad(lambda s: -math.exp(-s * r * r) * math.sin(xi * s), 0, t, epsabs=1e-15, epsrel=1e-14)[0]
    return complex(math.cos(xi * t), math.sin(xi * t)) * complex(re, im)


def test_zero_time_and_zero_frequency():
    assert gamma_t(0.0, 3.0, 2.0) == 0
    assert gamma_t(0.4, 0.0, 0.0) == pytest.approx(0.4)
    r = 1.3
    assert gamma_t(0.8, 0.0, r) == pytest.approx((1 - math.exp(-r * r * 0.8)) / r**2, rel=1e-15)


def test_frozen_value():
    # 30-digit evaluation of the defining integral
    ref = 0.0711787615535514542848934306465 + 0.308740220555917680665243254807j
    assert abs(gamma_t(0.7, 3.1, 1.4) - ref) < 1e-15
    assert abs(defining_integral(0.7, 3.1, 1.4) - ref) < 1e-12


def test_removable_singularity_is_smooth():
    t = 0.6
    for z in (1e-5, 1e-7, 1e-9):
        inside = gamma_t(t, z, math.sqrt(z))
        assert inside == pytest.approx(defining_integral(t, z, math.sqrt(z)), abs=1e-14)


def test_domain_errors():
    with pytest.raises(DomainError):
        gamma_t(-0.1, 1.0, 1.0)
    with pytest.raises(DomainError):
        gamma_t(0.1, 1.0, -1.0)


@given(st.floats(0, 1), st.floats(-50, 50), st.floats(0, 50))
def test_modulus_identity(t, xi, r):
    g = gamma_t(t, xi, r)
    assert gamma_abs2(t, xi, r) == pytest.approx(abs(g) ** 2, rel=1e-13, abs=1e-300)


@given(st.floats(0, 1), st.floats(-50, 50), st.floats(0, 50))
def test_closed_form_matches_definition(t, xi, r):
    assert abs(gamma_t(t, xi, r) - defining_integral(t, xi, r)) <= 1e-12


def test_increment_frozen_and_ordering():
    ref = 0.147109338045819011658937788027 + 0.157833966407607971216652536259j
    assert abs(gamma_increment(0.2, 0.5, 2.0, 1.0) - ref) < 1e-14
    assert abs(defining_integral(0.5, 2.0, 1.0) - defining_integral(0.2, 2.0, 1.0) - ref) < 1e-12
    assert gamma_increment(0.3, 0.3, 5.0, 2.0) == 0
    with pytest.raises(OrderingError):
        gamma_increment(0.5, 0.2, 1.0, 1.0)


@pytest.mark.parametrize("eps", [0.0, 0.5, 1.0])
def test_increment_bound_constant(eps):
    rng = np.random.default_rng(7)
    s, t = np.sort(rng.uniform(0, 1, (2, 1000)), axis=0)
    xi, r = rng.uniform(-50, 50, 1000), rng.uniform(0, 50, 1000)
    ratio = np.abs(gamma_increment(s, t, xi, r)) / increment_bound(s, t, xi, r, eps)
    assert np.max(ratio) <= 10


def test_xi_integral_plancherel():
    # H0 = 1/2: Plancherel in time gives pi (1 - e^{-2 r^2 t}) / r^2
    assert gamma_xi_integral(0.0, 1.0, 1.0, 0.5) == pytest.approx(math.pi * (1 - math.exp(-2)), abs=1e-9)
    r = np.array([0.5, 2.0, 7.0])
    np.testing.assert_allclose(gamma_xi_integral(0.0, 0.3, r, 0.5), math.pi * -np.expm1(-0.6 * r * r) / r**2,
                               rtol=1e-9)


def test_xi_integral_increment_plancherel():
    # |gamma_t - gamma_s|^2 integrates to 2 pi int_0^t |e^{-(t-u) r^2} 1_{u>s} - ...|^2, written out:
    s, t, r = 0.2, 0.7, 1.5
    u = r * r
    a = math.exp(-u * (t - s))
    exact = math.pi * ((1 - a * a) / u + (1 - a) ** 2 * (1 - math.exp(-2 * u * s)) / u)
    assert gamma_xi_integral(s, t, r, 0.5) == pytest.approx(exact, rel=1e-9)


def test_xi_integral_weighted_frozen():
    # H0 = 0.3: 30-digit value with the cos(xi) part integrated by a separate oscillatory rule
    assert gamma_xi_integral(0.0, 1.0, 1.2, 0.3) == pytest.approx(3.22188260882791931378922626736, abs=1e-9)


def test_xi_integral_degenerate_and_errors():
    assert gamma_xi_integral(0.4, 0.4, 2.0, 0.3) == 0
    with pytest.raises(OrderingError):
        gamma_xi_integral(0.5, 0.2, 1.0, 0.3)
    with pytest.raises(DomainError):
        gamma_xi_integral(0.0, 1.0, 1.0, 1.2)


def test_xi_integral_bounded_ratio():
    rs = np.array([2.0, 4.0, 8.0, 16.0])
    H0, eps = 0.5, 0.25
    ratios = gamma_xi_integral(0.0, 1.0, rs, H0) * rs ** (4 * (H0 - eps))
    assert np.max(ratios) <= 2 * ratios[0]
    assert np.max(ratios) <= 10


@pytest.mark.parametrize("H0,eps", [(0.5, 0.25), (0.3, 0.1), (0.7, 0.4)])
def test_xi_integral_sharp_on_diagonal(H0, eps):
    # with |t - s| = r^{-2} the bound is attained up to a constant
    rs = np.array([2.0, 4.0, 8.0, 16.0])
    vals = np.array([gamma_xi_integral(0.5, 0.5 + r**-2, r, H0) for r in rs])
    ratios = vals * rs ** (4 * (H0 - eps)) / (rs**-2) ** (2 * eps)
    assert np.max(ratios) <= 2 * np.min(ratios)


@pytest.mark.parametrize("H0", [0.2, 0.5, 0.8])
def test_xi_integral_decay_exponent(H0):
    rs = np.geomspace(2, 32, 5)
    slope = np.polyfit(np.log(rs), np.log(gamma_xi_integral(0.0, 1.0, rs, H0)), 1)[0]
    assert abs(slope + 4 * H0) <= 0.1


def test_explosion_integral_frozen():
    assert explosion_integral(0.25) == pytest.approx(0.487495494399361048, abs=1e-12)
    # H0 = 1/2: arctan(1)
    assert explosion_integral(0.5) == pytest.approx(math.pi / 4, abs=1e-13)


def test_explosion_bound():
    t, r, H0, n = 1.0, 2.0, 0.25, 4
    assert explosion_lower_bound(t, r, H0, n) <= big_gamma(t, r, H0, n)
    assert explosion_lower_bound(2.0, r, H0, n) > explosion_lower_bound(1.0, r, H0, n)
    assert explosion_lower_bound(1e-12, r, H0, n) < 1e-20
    with pytest.raises(DomainError):
        explosion_lower_bound(1.0, 0.5, H0, n)


@given(st.floats(0.01, 1), st.floats(1, 16), st.floats(0.05, 0.95))
def test_explosion_bound_property(t, r, H0):
    assert explosion_lower_bound(t, r, H0, 4) <= big_gamma(t, r, H0, 4)


def test_antiderivatives():
    rng = np.random.default_rng(3)
    for a, x, T in rng.uniform(1e-3, 3, (100, 3)):
        for fn, g in ((damped_sin_integral, lambda y: math.sin(T * y) * math.exp(-T * x * y)),
                      (damped_cos_integral, lambda y: math.cos(T * y) * math.exp(-T * x * y)),
                      (damped_exp_integral, lambda y: math.exp(-2 * T * x * y))):
            ref = integrate.quad(g, 0, a, epsabs=1e-14, epsrel=1e-13)[0]
            assert fn(a, x, T) == pytest.approx(ref, abs=1e-10)
