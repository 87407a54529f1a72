"""Periodic grids, Bessel-potential Sobolev norms, the heat semigroup and cutoffs.

All operators act on the last ``d`` axes of an array, so batches of fields
(samples, times) go through unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class PeriodicGrid:
    """N points per axis on the torus [-L, L)^d."""

    d: int
    N: int
    L: float = 4.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigError("grid dimension must be 1, 2 or 3")
        if self.N < 2 or self.N & (self.N - 1):
            raise ConfigError(f"grid size N={self.N} is not a power of two")
        if not self.L > 0:
            raise ConfigError("grid half-width L must be positive")

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def spacing(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.spacing * np.arange(self.N)

    @cached_property
    def points(self) -> np.ndarray:
        """Coordinates of all grid points, shape (N**d, d), row-major."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 on the rfft lattice, k = pi m / L."""
        full = np.pi * np.fft.fftfreq(self.N, d=1.0 / self.N) / self.L
        half = np.pi * np.fft.rfftfreq(self.N, d=1.0 / self.N) / self.L
        axes = [full] * (self.d - 1) + [half]
        ks = np.meshgrid(*axes, indexing="ij")
        return sum(k * k for k in ks)

    def meta(self) -> dict:
        return {"d": self.d, "N": self.N, "L": self.L}


def grid_for_frequency(d: int, kmax: float, L: float = 4.0, minimum: int = 16) -> PeriodicGrid:
    """Smallest power-of-two grid whose Nyquist wavenumber is at least ``kmax``."""
    N = minimum
    while np.pi * N / (2.0 * L) < kmax:
        N *= 2
    return PeriodicGrid(d, N, L)


@dataclass(frozen=True)
class SobolevParams:
    s: float
    p: float = 2.0

    def __post_init__(self):
        if not self.p >= 1:
            raise DomainError("integrability p must be >= 1")


def _axes(grid: PeriodicGrid) -> tuple:
    return tuple(range(-grid.d, 0))


def fourier_multiply(field, multiplier, grid: PeriodicGrid):
    axes = _axes(grid)
    spec = np.fft.rfftn(field, axes=axes)
    return np.fft.irfftn(spec * multiplier, s=grid.shape, axes=axes)


def lp_norm(field, p: float, grid: PeriodicGrid):
    axes = _axes(grid)
    a = np.abs(field)
    if np.isinf(p):
        return np.max(a, axis=axes)
    return (np.sum(a**p, axis=axes) * grid.spacing**grid.d) ** (1.0 / p)


def bessel_norm(field, params: Union[SobolevParams, Sequence[float]], grid: PeriodicGrid):
    """|| F^{-1} (1 + |k|^2)^{s/2} F f ||_{L^p} on the grid (trapezoid L^p)."""
    if not isinstance(params, SobolevParams):
        params = SobolevParams(*params)
    field = np.asarray(field, dtype=float)
    if field.shape[-grid.d:] != grid.shape:
        raise ConfigError("field does not match the grid shape")
    if params.s == 0:
        return lp_norm(field, params.p, grid)
    g = fourier_multiply(field, (1.0 + grid.k2) ** (0.5 * params.s), grid)
    return lp_norm(g, params.p, grid)


def apply_heat(field, t: float, grid: PeriodicGrid):
    """e^{t Laplacian} as the multiplier e^{-|k|^2 t}."""
    if t < 0:
        raise DomainError("heat semigroup needs t >= 0")
    if t == 0:
        return np.array(field, dtype=float, copy=True)
    return fourier_multiply(field, np.exp(-t * grid.k2), grid)


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class CutoffFn:
    """Radial smooth bump: 1 on the inner ball, 0 outside the outer ball."""

    center: tuple = (0.0,)
    inner_radius: float = 0.5
    outer_radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not (0 < self.inner_radius < self.outer_radius):
            raise DomainError("cutoff radii must satisfy 0 < inner < outer")

    @property
    def d(self) -> int:
        return len(self.center)

    def check_grid(self, grid: PeriodicGrid):
        if grid.d != self.d:
            raise DomainError("cutoff and grid dimensions differ")
        if self.outer_radius > grid.L / 2:
            raise DomainError("cutoff outer radius exceeds L/2")
        if np.any(np.abs(np.asarray(self.center)) + self.outer_radius >= grid.L):
            raise DomainError("cutoff support leaves the torus fundamental domain")

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        dist = np.linalg.norm(pts - np.asarray(self.center)[None, :], axis=1)
        s = (dist - self.inner_radius) / (self.outer_radius - self.inner_radius)
        return 1.0 - _smooth_step(s)

    def on_grid(self, grid: PeriodicGrid) -> np.ndarray:
        self.check_grid(grid)
        return self(grid.points).reshape(grid.shape)

    def support_mask(self, grid: PeriodicGrid) -> np.ndarray:
        return self.on_grid(grid) > 0


def multiply_cutoff(field, chi: CutoffFn, grid: PeriodicGrid):
    return np.asarray(field) * chi.on_grid(grid)


# band-limited test fields, defined independently of the grid resolution

def random_modes(d: int, M: int, rng: np.random.Generator, decay: float = 0.0) -> np.ndarray:
    """Complex coefficients on the modes m in [-M, M]^d, scaled by (1+|m|^2)^(-decay/2)."""
    shape = (2 * M + 1,) * d
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    m = np.meshgrid(*([np.arange(-M, M + 1)] * d), indexing="ij")
    m2 = sum(x * x for x in m)
    return c * (1.0 + m2) ** (-0.5 * decay)


def synthesize_modes(coeffs: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Real part of sum_m c_m e^{i pi m.x / L} sampled on the grid."""
    d = grid.d
    M = (coeffs.shape[0] - 1) // 2
    if 2 * M + 1 > grid.N * 2 // 3:
        raise ConfigError("grid too coarse for the requested band")
    spec = np.zeros(grid.shape, dtype=complex)
    idx = np.arange(-M, M + 1) % grid.N
    spec[np.ix_(*([idx] * d))] = coeffs
    # grid origin sits at x = -L: shift phases accordingly
    m = np.meshgrid(*([np.arange(-M, M + 1)] * d), indexing="ij")
    phase = np.exp(-1j * np.pi * sum(m))
    spec[np.ix_(*([idx] * d))] *= phase
    field = np.fft.ifftn(spec) * grid.N**d
    return field.real


# fitted constants of the operator inequalities (ratios lhs / rhs, maximized)

def heat_smoothing_constant(fields, grid, times, s1, s2, p):
    """max over fields and t of ||e^{t Lap} f||_{s2,p} / ((1 + t^{-(s2-s1)/2}) ||f||_{s1,p})."""
    base = bessel_norm(fields, (s1, p), grid)
    best = 0.0
    for t in times:
        top = bessel_norm(apply_heat(fields, t, grid), (s2, p), grid)
        ratio = top / ((1.0 + t ** (-0.5 * (s2 - s1))) * base)
        best = max(best, float(np.max(ratio)))
    return best


def kato_ponce_constant(us, vs, grid, s, r, p1, p2, q1, q2):
    lhs = bessel_norm(us * vs, (s, r), grid)
    rhs = (bessel_norm(us, (s, p1), grid) * lp_norm(vs, p2, grid)
           + lp_norm(us, q1, grid) * bessel_norm(vs, (s, q2), grid))
    return float(np.max(lhs / rhs))


def product_constant(fs, gs, grid, alpha, beta, p, p1, p2):
    lhs = bessel_norm(fs * gs, (-alpha, p), grid)
    rhs = bessel_norm(fs, (-alpha, p1), grid) * bessel_norm(gs, (beta, p2), grid)
    return float(np.max(lhs / rhs))
