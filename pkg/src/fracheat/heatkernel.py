"""The time-integrated heat multiplier gamma_t(xi, r) and its xi-integrals.

gamma_t(xi, r) = e^{i xi t} int_0^t e^{-s r^2} e^{-i xi s} ds
               = (e^{i xi t} - e^{-r^2 t}) / (r^2 + i xi).
"""
from __future__ import annotations

import math
from typing import Union

import numpy as np
from scipy import integrate

from .errors import AccuracyError, DomainError, OrderingError
from .quad import integrate_singular

TAYLOR_RADIUS = 1e-6
# split point between the directly integrated and the Fourier-tail regions
_XI_SPLIT = 8.0

TimeSpec = Union[float, tuple]


def gamma_t(t, xi, r):
    """Closed form of gamma_t(xi, r), vectorized; returns t at (xi, r) = (0, 0)."""
    t, xi, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, xi, r)))
    if np.any(t < 0) or np.any(r < 0):
        raise DomainError("gamma_t needs t >= 0 and r >= 0")
    z = r * r + 1j * xi
    small = np.abs(z) < TAYLOR_RADIUS
    zs = np.where(small, 1.0, z)
    # e^{i xi t} - e^{-r^2 t} = -e^{i xi t} expm1(-z t), no cancellation near z = 0
    out = -np.exp(1j * xi * t) * np.expm1(-zs * t) / zs
    if np.any(small):
        zt = z * t
        taylor = np.exp(1j * xi * t) * t * (1.0 - zt / 2.0 + zt * zt / 6.0)
        out = np.where(small, taylor, out)
    return out[()] if out.ndim == 0 else out


def gamma_abs2(t, xi, r):
    """|gamma_t|^2 = (1 - 2 cos(xi t) e^{-r^2 t} + e^{-2 r^2 t}) / (r^4 + xi^2)."""
    t, xi, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, xi, r)))
    u = r * r
    den = u * u + xi * xi
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = (1.0 - 2.0 * np.cos(xi * t) * np.exp(-u * t) + np.exp(-2.0 * u * t)) / den
    # the closed form cancels for small |z t|; use the stable complex value there
    risky = np.sqrt(den) * t < 0.25
    if np.any(risky):
        closed = np.where(risky, np.abs(gamma_t(t, xi, r)) ** 2, closed)
    return closed[()] if closed.ndim == 0 else closed


def gamma_increment(s, t, xi, r):
    """gamma_t - gamma_s for s <= t."""
    if np.any(np.asarray(s) > np.asarray(t)):
        raise OrderingError("gamma_increment needs s <= t")
    return gamma_t(t, xi, r) - gamma_t(s, xi, r)


def increment_bound(s, t, xi, r, eps):
    """Minimum of the three branches bounding |gamma_t - gamma_s|, without constant."""
    d = np.abs(np.asarray(t, float) - np.asarray(s, float))
    xi = np.abs(np.asarray(xi, float))
    r = np.asarray(r, float)
    u = r * r
    with np.errstate(divide="ignore", invalid="ignore"):
        b1 = xi**eps * d**eps + d
        b2 = d * u / xi + d**eps * (1.0 + u) / xi ** (1.0 - eps)
        b3 = d**eps * (u**eps + xi**eps) / np.sqrt(u * u + xi * xi)
    b2 = np.where(np.isnan(b2), np.inf, b2)
    b3 = np.where(np.isnan(b3), np.inf, b3)
    return np.minimum(np.minimum(b1, b2), b3)


def _time_terms(b: TimeSpec, u: np.ndarray):
    """gamma_b (r^2 + i xi) as a sum of c_j(r) e^{i xi tau_j}, c_j real arrays."""
    if isinstance(b, tuple):
        s, t = b
        if s > t:
            raise OrderingError("increment needs s <= t")
        return [(np.ones_like(u), t), (-np.ones_like(u), s), (-(np.exp(-u * t) - np.exp(-u * s)), 0.0)]
    return [(np.ones_like(u), float(b)), (-np.exp(-u * float(b)), 0.0)]


def _gamma_spec(b: TimeSpec, xi, r):
    if isinstance(b, tuple):
        return gamma_increment(b[0], b[1], xi, r)
    return gamma_t(b, xi, r)


def _cos_coefficients(b1: TimeSpec, b2: TimeSpec, u: np.ndarray) -> dict:
    """Re of the product numerator, grouped by frequency: {omega: a_omega(r)}."""
    out: dict = {}
    for c1, t1 in _time_terms(b1, u):
        for c2, t2 in _time_terms(b2, u):
            w = round(abs(t1 - t2), 14)
            out[w] = out.get(w, 0.0) + c1 * c2
    return out


def _tail_cos(g, omega, lo, hi, tol):
    """int_lo^hi g(x) cos(omega x) dx for slowly decaying g via QUADPACK."""
    kw = dict(weight="cos", wvar=omega, epsabs=tol, limlst=200)
    if math.isinf(hi):
        val, err = integrate.quad(g, lo, np.inf, **kw)
    else:
        val, err = integrate.quad(g, lo, hi, weight="cos", wvar=omega, epsabs=tol, epsrel=1e-12, limit=2000)
    if not (err <= max(10 * tol, 1e-9 * abs(val))):
        raise AccuracyError("oscillatory tail did not converge", value=val, error_estimate=err)
    return val


def xi_product_integral(b1: TimeSpec, b2: TimeSpec, r, H0: float, lo: float = 0.0,
                        hi: float = math.inf, tol: float = 1e-12):
    """Integral of gamma_{b1} conj(gamma_{b2}) |xi|^{1-2H0} over lo <= |xi| <= hi.

    ``b1``/``b2`` are times or ``(s, t)`` increments. The set is symmetric in
    xi, so the result is real. Vectorized over ``r``.
    """
    if not (0.0 < H0 < 1.0):
        raise DomainError("H0 must lie in (0, 1)")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise DomainError("r must be nonnegative")
    if not (0.0 <= lo <= hi):
        raise DomainError("need 0 <= lo <= hi")
    total = np.zeros_like(r)
    if hi == lo:
        return total
    e = 1.0 - 2.0 * H0
    u = r * r

    split = min(max(_XI_SPLIT, lo), hi)
    if split > lo:
        def near(x):
            g1 = _gamma_spec(b1, x[:, None], r[None, :])
            g2 = _gamma_spec(b2, x[:, None], r[None, :])
            return np.real(g1 * np.conj(g2)) * (x ** e)[:, None]

        res = integrate_singular(near, lo, split, e if lo == 0 else 0.0, 0.0, tol=tol, rel_tol=1e-13)
        total += 2.0 * res.value

    if hi > split:
        coefs = _cos_coefficients(b1, b2, u)
        a0 = coefs.pop(0.0, np.zeros_like(u))

        def smooth(x):
            return (x**e)[:, None] / (u[None, :] ** 2 + (x * x)[:, None])

        # the integrand has a knee at xi ~ r^2: grade deep enough to resolve it
        if math.isinf(hi):
            knee = max(float(np.max(u)) / split, 1.0)
            res = integrate_singular(smooth, split, hi, 0.0, e - 2.0, tol=tol, rel_tol=1e-13,
                                     min_depth=int(math.ceil(math.log2(knee))) + 4)
        else:
            res = integrate_singular(smooth, split, hi, 0.0, 0.0, tol=tol, rel_tol=1e-13,
                                     min_depth=int(math.ceil(math.log2(hi / split))) + 3)
        total += 2.0 * a0 * res.value
        # size of int |g| beyond the split, to skip negligible oscillatory terms
        gmax = split ** (e - 1.0) / (1.0 + 2.0 * H0)
        scale = np.abs(total) + 1e-300
        for omega, a in coefs.items():
            for j in np.nonzero(np.abs(a) * gmax > 1e-3 * tol * scale + 1e-300)[0]:
                uj = u[j]
                g = lambda x, uj=uj: x**e / (uj * uj + x * x)
                total[j] += 2.0 * a[j] * _tail_cos(g, omega, split, hi, tol)
    return total


def gamma_xi_integral(s: float, t: float, r, H0: float, bound: float = math.inf, tol: float = 1e-12):
    """int_{|xi| <= bound} |gamma_t - gamma_s|^2 |xi|^{1-2 H0} d xi."""
    if s > t:
        raise OrderingError("gamma_xi_integral needs s <= t")
    if s < 0:
        raise DomainError("times must be nonnegative")
    scalar = np.ndim(r) == 0
    if s == t:
        out = np.zeros(np.shape(np.atleast_1d(r)))
    else:
        b = t if s == 0 else (s, t)
        out = xi_product_integral(b, b, r, H0, 0.0, bound, tol)
    return float(out[0]) if scalar else out


def big_gamma(t: float, r, H0: float, n: int, tol: float = 1e-12):
    """Gamma^{H0,n}_t(r): the xi-integral of |gamma_t|^2 over |xi| <= 4^n."""
    return gamma_xi_integral(0.0, t, r, H0, 4.0**n, tol)


def explosion_integral(H0: float, tol: float = 1e-13) -> float:
    """int_0^1 d xi / ((1 + xi^2) xi^{2 H0 - 1})."""
    e = 1.0 - 2.0 * H0
    return integrate_singular(lambda x: x**e / (1.0 + x * x), 0.0, 1.0, e, 0.0, tol=tol).value


def explosion_lower_bound(t: float, r: float, H0: float, n: int) -> float:
    """Lower bound for Gamma^{H0,n}_t(r), valid for 1 <= r <= 2^n."""
    if not (0.0 < H0 < 1.0):
        raise DomainError("H0 must lie in (0, 1)")
    if r < 1:
        raise DomainError("the lower bound needs r >= 1")
    if r > 2.0**n:
        raise DomainError("the lower bound needs r <= 2^n")
    if t < 0:
        raise DomainError("t must be nonnegative")
    h = -math.expm1(-t)
    return 2.0 / r ** (4.0 * H0) * explosion_integral(H0) * h * h


# closed-form antiderivatives on [0, a] of sin/cos(T y) e^{-T x y} and e^{-2 T x y}

def damped_sin_integral(a, x, T):
    E = np.exp(-T * a * x)
    return (-x * E * np.sin(T * a) + 1.0 - E * np.cos(T * a)) / ((1.0 + x * x) * T)


def damped_cos_integral(a, x, T):
    E = np.exp(-T * a * x)
    return (E * np.sin(T * a) + x * (1.0 - E * np.cos(T * a))) / ((1.0 + x * x) * T)


def damped_exp_integral(a, x, T):
    return -np.expm1(-2.0 * T * x * a) / (2.0 * T * x)
