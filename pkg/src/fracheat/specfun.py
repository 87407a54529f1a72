"""Digamma, the integral pi/sin(pi beta), and the renormalization constants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DivergenceError, DomainError
from .quad import integrate_singular

# B_{2k} / (2k) for k = 1..8
_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
)
_SHIFT_TO = 10.0


def digamma(x):
    """Psi(x) = Gamma'(x)/Gamma(x) for x > 0, scalar or array."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("digamma requires x > 0")
    acc = np.zeros_like(x)
    y = x.copy()
    # Psi(x) = Psi(x + 1) - 1/x
    while True:
        low = y < _SHIFT_TO
        if not np.any(low):
            break
        acc[low] -= 1.0 / y[low]
        y[low] += 1.0
    inv2 = 1.0 / (y * y)
    series = np.zeros_like(y)
    for c in reversed(_ASYMPTOTIC):
        series = (series + c) * inv2
    out = acc + np.log(y) - 0.5 / y - series
    return float(out) if out.ndim == 0 else out


def classical_integral(beta: float) -> float:
    """pi / sin(pi beta), the value of int_0^inf dt / (t**beta (1 + t))."""
    if not (0.0 < beta < 1.0):
        raise DomainError("beta must lie in (0, 1)")
    if beta < 1e-8 or 1.0 - beta < 1e-8:
        raise DivergenceError(f"integral diverges as beta -> 0 or 1 (beta={beta})")
    return math.pi / math.sin(math.pi * beta)


def classical_integral_quadrature(beta: float, tol: float = 1e-10) -> float:
    """Same integral by quadrature; t > 1 is folded onto (0, 1) by t -> 1/t."""
    if not (0.0 < beta < 1.0):
        raise DomainError("beta must lie in (0, 1)")
    head = integrate_singular(lambda t: t**-beta / (1.0 + t), 0.0, 1.0, -beta, 0.0, tol=tol)
    tail = integrate_singular(lambda u: u ** (beta - 1.0) / (1.0 + u), 0.0, 1.0, beta - 1.0, 0.0, tol=tol)
    return head.value + tail.value


@dataclass(frozen=True)
class RenormConstants:
    alpha: float
    kappa: float
    c1: Optional[float]
    c2: float
    slope: float


def _check(alpha, kappa):
    if not (0.0 < alpha < 2.0):
        raise DomainError("alpha must lie in (0, 2)")
    if not (kappa >= 0.0):
        raise DomainError("kappa must be nonnegative")


def renorm_constants(alpha: float, kappa: float) -> RenormConstants:
    """Leading constants of sigma_n: c1 4**(n kappa) if kappa > 0, c2-driven n growth if kappa = 0."""
    _check(alpha, kappa)
    # int_0^inf x^(alpha-1)/(1+x^2) dx, with t = x^2
    c2 = 0.5 * classical_integral(1.0 - 0.5 * alpha)
    slope = 2.0 * math.log(2.0) * c2
    c1 = None
    if kappa > 0:
        a, k = alpha, kappa
        c1 = (
            digamma((a + k + 2.0) / 4.0)
            + digamma((4.0 - a) / 4.0)
            - digamma((a + k) / 4.0)
            - digamma((2.0 - a) / 4.0)
        ) / (4.0 * k)
    return RenormConstants(alpha=alpha, kappa=kappa, c1=c1, c2=c2, slope=slope)


def c1_quadrature(alpha: float, kappa: float, tol: float = 1e-12) -> float:
    """c1 from its integral definition, the (1, inf) piece folded by x -> 1/x."""
    _check(alpha, kappa)
    if kappa == 0:
        raise DomainError("c1 is defined for kappa > 0 only")
    e1 = alpha + kappa - 1.0
    near = integrate_singular(lambda x: x**e1 / (1.0 + x * x), 0.0, 1.0, e1, 0.0, tol=tol)
    e2 = 1.0 - alpha
    far = integrate_singular(lambda u: u**e2 / (1.0 + u * u), 0.0, 1.0, e2, 0.0, tol=tol)
    return (near.value + far.value) / kappa
