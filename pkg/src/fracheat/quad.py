"""Graded-mesh Gauss quadrature for integrands with power-law endpoint behaviour.

The mesh is dyadic toward both endpoints, so an integrand behaving like
``(x - a)**gamma`` is smooth on every cell relative to the cell size.
Refinement bisects every cell and deepens the grading; the error estimate
is the difference between two successive levels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import AccuracyError, DomainError, UnsupportedDimensionError

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureResult:
    value: float | np.ndarray
    error_estimate: float
    evaluations: int


@lru_cache(maxsize=16)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _is_smooth_exponent(e: float) -> bool:
    return e >= 0 and float(e).is_integer()


def _initial_depth(exponent: float, tol: float) -> int:
    if _is_smooth_exponent(exponent):
        return 2
    # innermost cell of width 2**-K contributes roughly (2**-K)**(1 + exponent)
    k = math.log2(10.0 / max(tol, 1e-300)) / (1.0 + exponent)
    return int(min(max(math.ceil(k), 4), 1000))


def _one_sided_cells(e: float, h: float, depth: int, split: int) -> tuple[np.ndarray, np.ndarray]:
    """Cells on [e, e + h] (h may be negative) graded dyadically toward e."""
    if e != 0.0:
        # keep the finest sub-cell resolvable relative to |e|
        floor = 1e3 * _EPS * abs(e) * split
        depth = min(depth, max(1, int(math.floor(math.log2(abs(h) / floor)))))
    offs = abs(h) * np.exp2(-np.arange(depth + 1, dtype=float))
    lo = np.concatenate([offs[1:], [0.0]])
    hi = offs
    frac = np.arange(split + 1) / split
    edges = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    a_off, b_off = edges[:, :-1].ravel(), edges[:, 1:].ravel()
    if h > 0:
        return e + a_off, e + b_off
    return e - b_off, e - a_off


def graded_mesh(a: float, b: float, depth_a: int, depth_b: int, split: int):
    m = 0.5 * (a + b)
    la, ha = _one_sided_cells(a, m - a, depth_a, split)
    lb, hb = _one_sided_cells(b, m - b, depth_b, split)
    return np.concatenate([la, lb]), np.concatenate([ha, hb])


def _rule(lo: np.ndarray, hi: np.ndarray, order: int):
    t, w = gauss_legendre(order)
    half = 0.5 * (hi - lo)
    x = (0.5 * (hi + lo))[:, None] + half[:, None] * t[None, :]
    wx = half[:, None] * w[None, :]
    return x.ravel(), wx.ravel()


def _apply(f, x, wx):
    fx = np.asarray(f(x))
    if fx.shape[0] != x.shape[0]:
        raise ValueError("integrand must map an array of nodes to values along axis 0")
    return np.tensordot(wx, fx, axes=(0, 0))


def integrate_singular(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    exponent_a: float = 0.0,
    exponent_b: float = 0.0,
    tol: float = 1e-10,
    rel_tol: float = 0.0,
    order: int = 20,
    max_level: int = 8,
    min_depth: int = 0,
) -> QuadratureResult:
    """Integrate ``f`` over [a, b] with power-law behaviour at the endpoints.

    ``f`` is called with a 1-D array of nodes and must return values along
    axis 0 (extra trailing axes are integrated componentwise).

    ``exponent_a`` is the power ``gamma > -1`` with ``f ~ (x - a)**gamma``
    near ``a`` (same for ``b``). For ``b = inf`` the meaning of
    ``exponent_b`` changes to the decay power ``mu < -1`` in
    ``f ~ x**mu``; the tail is mapped onto a finite interval by ``x = c/u``.

    ``min_depth`` forces dyadic grading of at least that many levels at both
    ends, for integrands varying on a logarithmic scale.

    Converged when the difference of two successive refinement levels is at
    most ``max(tol, rel_tol * |value|)``; otherwise raises
    :class:`AccuracyError` carrying the last value.
    """
    if not (exponent_a > -1):
        raise DomainError("exponent_a must exceed -1")
    if math.isinf(b):
        if not (exponent_b < -1):
            raise DomainError("for an infinite upper limit exponent_b is the decay power and must be < -1")
        if math.isinf(a):
            raise DomainError("lower limit must be finite")
        c = a + max(1.0, abs(a))
        head = integrate_singular(f, a, c, exponent_a, 0.0, 0.5 * tol, rel_tol, order, max_level)

        def g(u):
            x = c / u
            fx = np.asarray(f(x))
            jac = (c / u**2).reshape((-1,) + (1,) * (fx.ndim - 1))
            return fx * jac

        tail = integrate_singular(g, 0.0, 1.0, -exponent_b - 2.0, 0.0, 0.5 * tol, rel_tol, order, max_level,
                                  min_depth)
        return QuadratureResult(head.value + tail.value, head.error_estimate + tail.error_estimate,
                                head.evaluations + tail.evaluations)
    if not (exponent_b > -1):
        raise DomainError("exponent_b must exceed -1")
    if not (a < b):
        raise DomainError("need a < b")

    depth_tol = max(tol, rel_tol, 1e-16)
    ka = max(_initial_depth(exponent_a, depth_tol), min_depth)
    kb = max(_initial_depth(exponent_b, depth_tol), min_depth)
    step_a = 0 if _is_smooth_exponent(exponent_a) else 4
    step_b = 0 if _is_smooth_exponent(exponent_b) else 4
    evaluations = 0
    prev = None
    value = None
    err = math.inf
    for level in range(max_level + 1):
        lo, hi = graded_mesh(a, b, ka + step_a * level, kb + step_b * level, 2**level)
        x, wx = _rule(lo, hi, order)
        value = _apply(f, x, wx)
        evaluations += x.size
        if prev is not None:
            err = float(np.max(np.abs(value - prev))) + _endpoint_cell_error(f, lo, hi, order)
            scale = float(np.max(np.abs(value)))
            if err <= max(tol, rel_tol * scale):
                return QuadratureResult(_unwrap(value), err, evaluations)
        prev = value
    raise AccuracyError(f"no convergence on [{a}, {b}] after {max_level} refinements",
                        value=_unwrap(value), error_estimate=err)


def _endpoint_cell_error(f, lo, hi, order) -> float:
    """Order-halving error estimate on the two cells touching the endpoints.

    Dyadic grading stops once offsets fall below machine resolution of a
    nonzero endpoint; the singular cell left over is then integrated only
    to the accuracy this estimate reports.
    """
    i, j = int(np.argmin(lo)), int(np.argmax(hi))
    cells = (np.array([lo[i], lo[j]]), np.array([hi[i], hi[j]]))
    fine = _apply(f, *_rule(*cells, order))
    coarse = _apply(f, *_rule(*cells, order // 2))
    return float(np.max(np.abs(fine - coarse)))


def _unwrap(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def angular_constant(d: int, h_spatial: Sequence[float], tol: float = 1e-12) -> float:
    """Integral over the unit sphere of prod |omega_i|**(1 - 2 H_i).

    With it, the integral over R^d of prod |eta_i|**(1-2H_i) g(|eta|) equals
    this constant times the radial integral of r**(2d-1-2 sum H) g(r).
    """
    h = np.asarray(h_spatial, dtype=float)
    if h.shape != (d,):
        raise DomainError("need one spatial Hurst index per dimension")
    if np.any((h <= 0) | (h >= 1)):
        raise DomainError("Hurst component out of (0,1)")
    if d > 3:
        raise UnsupportedDimensionError("angular constant only for d <= 3")
    a = 1.0 - 2.0 * h
    if d == 1:
        return 2.0
    if d == 2:
        # 4 quadrants, theta measured from the eta_1 axis
        res = integrate_singular(
            lambda th: np.cos(th) ** a[0] * np.sin(th) ** a[1],
            0.0, 0.5 * np.pi, a[1], a[0], tol=tol, rel_tol=tol,
        )
        return 4.0 * res.value

    # d = 3: octant, omega = (sin p cos q, sin p sin q, cos p), d omega = sin p dp dq
    ring = integrate_singular(
        lambda q: np.cos(q) ** a[0] * np.sin(q) ** a[1],
        0.0, 0.5 * np.pi, a[1], a[0], tol=tol, rel_tol=tol,
    ).value
    polar = integrate_singular(
        lambda p: np.sin(p) ** (a[0] + a[1] + 1.0) * np.cos(p) ** a[2],
        0.0, 0.5 * np.pi, a[0] + a[1] + 1.0, a[2], tol=tol, rel_tol=tol,
    ).value
    return 8.0 * ring * polar
