import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from fracheat.errors import DivergenceError, DomainError
from fracheat.specfun import (c1_quadrature, classical_integral, classical_integral_quadrature, digamma,
                              renorm_constants)


def test_digamma_telescoping():
    assert digamma(2.0) - digamma(1.0) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("x", [0.3, 1.7, 5.2])
def test_digamma_recurrence_matches_direct_series(x):
    # sum 1/((n+x)(n+x+1)) telescopes to 1/x; evaluated directly with a tail correction
    n = np.arange(200000, dtype=float)
    partial = np.sum(1.0 / ((n + x) * (n + x + 1.0)))
    tail = 1.0 / (200000 + x)
    assert partial + tail == pytest.approx(1.0 / x, rel=1e-12)
    assert digamma(x + 1) - digamma(x) == pytest.approx(1.0 / x, rel=1e-12)


def test_digamma_against_scipy():
    x = np.geomspace(1e-3, 1e3, 400)
    np.testing.assert_allclose(digamma(x), special.digamma(x), rtol=1e-10, atol=1e-12)


def test_digamma_domain():
    with pytest.raises(DomainError):
        digamma(0.0)
    with pytest.raises(DomainError):
        digamma(np.array([1.0, -2.0]))


def _richardson_series(a, b, N=4000):
    # partial sums S_N, S_2N have tails ~ 1/N; one Richardson step removes it
    def s(m):
        n = np.arange(m, dtype=float)
        return np.sum(1.0 / ((n + a) * (n + b)))
    s1, s2, s4 = s(N), s(2 * N), s(4 * N)
    r1, r2 = 2 * s2 - s1, 2 * s4 - s2
    return (4 * r2 - r1) / 3


@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_series_identity(a, b):
    if abs(a - b) < 1e-3:
        b = a + 0.5
    lhs = _richardson_series(a, b)
    rhs = (digamma(b) - digamma(a)) / (b - a)
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_series_identity_unit_pair():
    assert _richardson_series(1.0, 2.0) == pytest.approx(1.0, abs=1e-9)


def test_classical_integral_values():
    assert classical_integral(0.5) == pytest.approx(math.pi, rel=1e-15)
    # frozen from a 30-digit evaluation of pi/sin(pi/4)
    assert classical_integral(0.25) == pytest.approx(4.442882938158366, rel=1e-14)
    assert classical_integral_quadrature(0.25) == pytest.approx(4.442882938158366, abs=1e-6)


@pytest.mark.parametrize("beta", np.round(np.arange(0.1, 1.0, 0.1), 10))
def test_classical_integral_identity(beta):
    assert classical_integral(beta) * math.sin(math.pi * beta) == pytest.approx(math.pi, abs=1e-9)
    assert classical_integral_quadrature(beta) == pytest.approx(math.pi / math.sin(math.pi * beta), abs=1e-6)


def test_classical_integral_errors():
    with pytest.raises(DivergenceError):
        classical_integral(1e-9)
    with pytest.raises(DivergenceError):
        classical_integral(1 - 1e-9)
    for bad in (0.0, 1.0, -0.3, 1.5):
        with pytest.raises(DomainError):
            classical_integral(bad)


def test_renorm_constants_examples():
    c = renorm_constants(1.0, 1.0)
    # ln2/2 + pi/4 from the closed-form antiderivatives
    assert c.c1 == pytest.approx(1.131971753677421, abs=1e-12)
    assert renorm_constants(1.0, 0.0).c2 == pytest.approx(math.pi / 2, abs=1e-12)
    # pi ln2 / sin(pi/4) to 15 digits
    assert renorm_constants(0.5, 0.0).slope == pytest.approx(3.079571782142357, rel=1e-13)


def test_c1_undefined_at_zero_kappa():
    c = renorm_constants(1.0, 0.0)
    assert c.c1 is None or math.isnan(c.c1)


@pytest.mark.parametrize("alpha", np.linspace(0.2, 1.8, 5))
@pytest.mark.parametrize("kappa", np.linspace(0.1, 2.0, 5))
def test_c1_closed_form_vs_quadrature(alpha, kappa):
    assert renorm_constants(alpha, kappa).c1 == pytest.approx(c1_quadrature(alpha, kappa), abs=1e-8)


@given(st.floats(0.05, 1.95), st.floats(0.0, 3.0))
def test_constant_invariants(alpha, kappa):
    c = renorm_constants(alpha, kappa)
    assert c.c2 > 0 and c.slope > 0
    assert c.c2 == pytest.approx(math.pi / (2 * math.sin(alpha * math.pi / 2)), rel=1e-12)
    if kappa > 0:
        assert c.c1 > 0


def test_renorm_constants_domain():
    with pytest.raises(DomainError):
        renorm_constants(2.0, 0.1)
    with pytest.raises(DomainError):
        renorm_constants(1.0, -0.1)
