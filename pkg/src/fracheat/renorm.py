"""Renormalization constants sigma_n(t), their asymptotics, the Wick growth
statistic and the two-dimensional kernels K^H and L^{H,a}_b.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import BudgetError, DomainError, FitError
from .heatkernel import big_gamma, xi_product_integral
from .hurst import HurstVector
from .mesh import angular_cells, build_mesh
from .noise import Estimate, draw_ensemble, psi_values, sigma_disc
from .quad import angular_constant, gauss_legendre, integrate_singular
from .sobolev import CutoffFn, PeriodicGrid, bessel_norm, grid_for_frequency
from .specfun import renorm_constants


def normalizing_constant(hurst: HurstVector) -> float:
    """C = c_H^2 A_{d,H} with c_H = 1."""
    return angular_constant(hurst.d, hurst.spatial)


def sigma_continuum(hurst, n: int, t: float, tol: float = 1e-6) -> float:
    """sigma_n(t) = C int_0^{2^n} r^{2d-1-2 sum H} Gamma^{H0,n}_t(r) dr."""
    hurst = HurstVector.of(hurst)
    if not t > 0:
        raise DomainError("t must be positive")
    if hurst.kappa < 0:
        raise DomainError("sigma_continuum is tabulated for kappa >= 0 only")
    e = 2 * hurst.d - 1 - 2 * sum(hurst.spatial)
    res = integrate_singular(lambda r: r**e * big_gamma(t, r, hurst.h0, n), 0.0, 2.0**n,
                             e, 0.0, tol=0.0, rel_tol=0.1 * tol, order=16)
    return normalizing_constant(hurst) * res.value


@dataclass(frozen=True)
class RenormRow:
    n: int
    sigma_continuum: float
    sigma_disc: Optional[float] = None
    stderr: Optional[float] = None


@dataclass
class RenormTable:
    hurst: HurstVector
    t: float
    rows: list = field(default_factory=list)

    @property
    def kappa(self) -> float:
        return self.hurst.kappa

    def ns(self) -> np.ndarray:
        return np.array([r.n for r in self.rows], dtype=float)

    def values(self) -> np.ndarray:
        return np.array([r.sigma_continuum for r in self.rows], dtype=float)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "sigma_continuum", "sigma_disc", "stderr"])
        for r in self.rows:
            w.writerow([r.n, repr(r.sigma_continuum), "" if r.sigma_disc is None else repr(r.sigma_disc),
                        "" if r.stderr is None else repr(r.stderr)])


def renorm_table(hurst, n_range: Sequence[int], t: float = 1.0, with_disc: bool = True,
                 tol: float = 1e-6, **mesh_kw) -> RenormTable:
    hurst = HurstVector.of(hurst)
    table = RenormTable(hurst, t)
    for n in n_range:
        disc = sigma_disc(build_mesh(hurst.d, n, **mesh_kw), hurst, t) if with_disc else None
        table.rows.append(RenormRow(n, sigma_continuum(hurst, n, t, tol), disc))
    return table


@dataclass(frozen=True)
class FitReport:
    kind: str
    kappa: float
    normalizer: float
    constant: Optional[float] = None
    spread: Optional[float] = None
    slope: Optional[float] = None
    intercept: Optional[float] = None
    residuals: tuple = ()
    r2: Optional[float] = None
    reference: Optional[float] = None

    @property
    def normalized(self) -> float:
        """Fitted constant (kappa > 0) or slope (kappa = 0) divided by C."""
        v = self.constant if self.kind == "geometric" else self.slope
        return v / self.normalizer

    @property
    def relative_error(self) -> Optional[float]:
        if self.reference is None:
            return None
        return abs(self.normalized - self.reference) / abs(self.reference)


def fit_asymptotics(table: RenormTable, normalizer: Optional[float] = None) -> FitReport:
    """Geometric constant of sigma_n 4^{-n kappa} (kappa > 0) or affine fit in n (kappa = 0)."""
    n, y = table.ns(), table.values()
    if len(n) < 5 or not np.all(np.isfinite(y)) or len(set(n)) < len(n):
        raise FitError("need at least 5 distinct finite rows")
    kappa = table.kappa
    if normalizer is None:
        normalizer = normalizing_constant(table.hurst)
    alpha = 2.0 * table.hurst.h0
    if kappa > 1e-12:
        ratio = y * 4.0 ** (-n * kappa)
        c = float(np.mean(ratio))
        spread = float((ratio.max() - ratio.min()) / abs(c))
        ref = renorm_constants(alpha, kappa).c1 if 0 < alpha < 2 else None
        return FitReport("geometric", kappa, normalizer, constant=c, spread=spread,
                         residuals=tuple(ratio - c), reference=ref)
    if abs(kappa) <= 1e-12:
        A = np.column_stack([n, np.ones_like(n)])
        (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
        res = y - (slope * n + intercept)
        ss = float(np.sum((y - y.mean()) ** 2))
        if ss == 0:
            raise FitError("constant table has no affine trend")
        r2 = 1.0 - float(np.sum(res**2)) / ss
        return FitReport("affine", 0.0, normalizer, slope=float(slope), intercept=float(intercept),
                         residuals=tuple(res), r2=r2, reference=renorm_constants(alpha, 0.0).slope)
    raise FitError("asymptotic fit needs kappa >= 0")


def ratio_drift(table: RenormTable, n_a: int, n_b: int) -> float:
    """Relative change of sigma_n 4^{-n kappa} between two levels."""
    lookup = {r.n: r.sigma_continuum for r in table.rows}
    k = table.kappa
    a, b = lookup[n_a] * 4.0 ** (-n_a * k), lookup[n_b] * 4.0 ** (-n_b * k)
    return abs(b - a) / abs(a)


# Wick growth statistic

def wick_norm_growth(hurst, alpha: float, n_range: Sequence[int], samples: int, seed: int,
                     chi: CutoffFn, t: float = 1.0, grid: Optional[PeriodicGrid] = None,
                     chunk: int = 128, **mesh_kw) -> list:
    """Monte Carlo E||chi^2 Wick_n(t)||^2_{H^{-2 alpha}} per level n."""
    hurst = HurstVector.of(hurst)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if not t > 0:
        raise DomainError("t must be positive")
    n_range = list(n_range)
    if grid is None:
        grid = grid_for_frequency(hurst.d, 2.0 ** (max(n_range) + 1) + 16.0)
    prof = chi.on_grid(grid).ravel()
    mask = prof > 0
    pts, c2 = grid.points[mask], prof[mask] ** 2
    rows = []
    for n in n_range:
        mesh = build_mesh(hurst.d, n, **mesh_kw)
        sig = sigma_disc(mesh, hurst, t)
        vals = np.empty(samples)
        for a in range(0, samples, chunk):
            ids = np.arange(a, min(a + chunk, samples))
            psi = psi_values(mesh, hurst, draw_ensemble(mesh, seed, ids), [t], pts)[:, 0, :]
            full = np.zeros((ids.size, mask.size))
            full[:, mask] = c2[None, :] * (psi * psi - sig)
            vals[a:a + ids.size] = bessel_norm(full.reshape((ids.size,) + grid.shape), (-2.0 * alpha, 2.0), grid) ** 2
        se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else float("nan")
        rows.append(Estimate(n, float(vals.mean()), se, samples))
    return rows


def growth_trend(rows: Sequence[Estimate]) -> str:
    """'increasing', 'bounded' (last/first < 2) or 'none' for a single level."""
    if len(rows) < 2:
        return "none"
    m = [r.mean for r in rows]
    if all(b > a for a, b in zip(m, m[1:])) and m[-1] >= 2 * m[0]:
        return "increasing"
    if m[-1] / m[0] < 2:
        return "bounded"
    return "growing"


# two-dimensional kernels

@dataclass(frozen=True)
class KernelKH:
    """K^H(eta) = |eta1|^{1-2H1} |eta2|^{1-2H2} / (1 + |eta|^{4 H0})."""

    h: tuple

    def __call__(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float).reshape(-1, 2)
        h0, h1, h2 = self.h
        r = np.linalg.norm(eta, axis=1)
        return np.abs(eta[:, 0]) ** (1 - 2 * h1) * np.abs(eta[:, 1]) ** (1 - 2 * h2) / (1.0 + r ** (4 * h0))


Level = Union[int, tuple]


def _section(level: Level, rho: float):
    """xi-section {lo < |xi| <= hi} of D^level at |eta| = rho, or None."""
    if isinstance(level, tuple):
        a, b = level
        if not a < b:
            raise DomainError("band (n, m) needs n < m")
        if rho <= 2.0**a:
            return (4.0**a, 4.0**b)
        if rho <= 2.0**b:
            return (0.0, 4.0**b)
        return None
    return (0.0, 4.0**level) if rho <= 2.0**level else None


def l_kernel(hurst, domain_pair: tuple, time_pair: tuple, eta, tol: float = 1e-12):
    """L^{H,a}_b(eta): xi-integral of gamma_{b1} conj(gamma_{b2}) |xi|^{1-2H0} over the
    section of D^{a1} and D^{a2}, times |eta1|^{1-2H1} |eta2|^{1-2H2}."""
    h = tuple(HurstVector.of(hurst).h)
    if len(h) != 3:
        raise DomainError("l_kernel is two-dimensional")
    eta = np.asarray(eta, dtype=float)
    scalar = eta.ndim == 1
    eta = eta.reshape(-1, 2)
    if np.any(eta == 0):
        raise DomainError("eta must avoid the coordinate axes")
    rho = np.linalg.norm(eta, axis=1)
    out = np.zeros(len(eta))
    groups: dict = {}
    for i, r in enumerate(rho):
        s1, s2 = _section(domain_pair[0], r), _section(domain_pair[1], r)
        if s1 is None or s2 is None:
            continue
        lo, hi = max(s1[0], s2[0]), min(s1[1], s2[1])
        if lo < hi:
            groups.setdefault((lo, hi), []).append(i)
    for (lo, hi), idx in groups.items():
        idx = np.array(idx)
        out[idx] = xi_product_integral(time_pair[0], time_pair[1], rho[idx], h[0], lo, hi, tol)
    out *= np.abs(eta[:, 0]) ** (1 - 2 * h[1]) * np.abs(eta[:, 1]) ** (1 - 2 * h[2])
    return float(out[0]) if scalar else out


def _rough2d_window(h: tuple) -> bool:
    return h[1] < 0.75 and h[2] < 0.75 and 1.5 < 2 * h[0] + h[1] + h[2] <= 1.75


@dataclass(frozen=True)
class DoubleIntegralResult:
    radii: tuple
    values: tuple
    final_increment: float

    @property
    def saturated(self) -> bool:
        return self.final_increment < 0.10


def _disc_nodes(R: float, depth: int = 8, radial_order: int = 8, angular_order: int = 4,
                angular_levels: int = 4, angular_res: int = 2):
    """Polar Gauss nodes on |eta| <= R, graded toward 0 and the axes.

    Returns nodes, weights and the dyadic radius class 2^ceil(log2 r).
    """
    tr, wr = gauss_legendre(radial_order)
    top = int(round(math.log2(R)))
    edges = [0.0] + [2.0**k for k in range(-depth, top + 1)]
    r_nodes, r_w, r_cls = [], [], []
    for a, b in zip(edges[:-1], edges[1:]):
        r_nodes.append(0.5 * (a + b) + 0.5 * (b - a) * tr)
        r_w.append(0.5 * (b - a) * wr)
        r_cls.append(np.full(radial_order, b))
    r_nodes, r_w, r_cls = map(np.concatenate, (r_nodes, r_w, r_cls))
    ta, wa = gauss_legendre(angular_order)
    alo, ahi = angular_cells(angular_levels, angular_res)
    th = (0.5 * (alo + ahi))[:, None] + (0.5 * (ahi - alo))[:, None] * ta[None, :]
    tw = (0.5 * (ahi - alo))[:, None] * wa[None, :]
    th, tw = th.ravel(), tw.ravel()
    Rn, Th = np.meshgrid(r_nodes, th, indexing="ij")
    W = (r_w * r_nodes)[:, None] * tw[None, :]
    C = np.broadcast_to(r_cls[:, None], Rn.shape)
    nodes = np.column_stack([(Rn * np.cos(Th)).ravel(), (Rn * np.sin(Th)).ravel()])
    return nodes, W.ravel(), C.ravel()


def lemma63_integral_estimate(hurst, hurst_tilde, alpha: float, R: float = 32.0,
                              radii: Sequence[float] = (4.0, 8.0, 16.0, 32.0), chunk: int = 2048,
                              **node_kw) -> DoubleIntegralResult:
    """Truncations of the double integral of K^H(eta) K^{H~}(eta~) (1 + |eta - eta~|^2)^{-2 alpha}
    over |eta|, |eta~| <= R' for each R' in ``radii`` up to ``R``.

    ``node_kw`` is passed to the polar node builder (depth, orders, angular grading).
    """
    h, ht = tuple(HurstVector.of(hurst).h), tuple(HurstVector.of(hurst_tilde).h)
    if len(h) != 3 or len(ht) != 3:
        raise DomainError("the double integral is two-dimensional")
    if not (_rough2d_window(h) and _rough2d_window(ht)):
        raise DomainError("both Hurst vectors must lie in the two-dimensional rough window")
    lo = max(2 - (2 * h[0] + h[1] + h[2]), 2 - (2 * ht[0] + ht[1] + ht[2]))
    if not (lo < alpha < 0.5):
        raise DomainError(f"alpha must lie in ({lo}, 1/2)")
    if R > 32:
        raise BudgetError("radial cutoff above 32 exceeds the desk-scale budget")
    radii = tuple(float(r) for r in radii if r <= R)
    if any(not float(math.log2(r)).is_integer() for r in radii):
        raise DomainError("radii must be powers of two")
    nodes, w, cls = _disc_nodes(max(radii), **node_kw)
    a = w * KernelKH(h)(nodes)
    b = w * KernelKH(ht)(nodes)
    levels = np.array(radii)
    ci = np.searchsorted(levels, cls)  # index of the smallest radius containing the node
    k = len(levels)
    acc = np.zeros((k + 1, k + 1))
    for s in range(0, len(nodes), chunk):
        d2 = np.sum((nodes[s:s + chunk, None, :] - nodes[None, :, :]) ** 2, axis=-1)
        M = (1.0 + d2) ** (-2.0 * alpha)
        part = (a[s:s + chunk, None] * M) * b[None, :]
        for i in range(k + 1):
            rows = ci[s:s + chunk] == i
            if not np.any(rows):
                continue
            colsum = part[rows].sum(axis=0)
            acc[i] += np.bincount(ci, weights=colsum, minlength=k + 1)
    values = tuple(float(acc[: j + 1, : j + 1].sum()) for j in range(k))
    inc = (values[-1] - values[-2]) / values[-2] if k >= 2 else float("nan")
    return DoubleIntegralResult(radii, values, float(inc))
