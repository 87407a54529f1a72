"""Hermitian spectral synthesis of B_n, Psi_n and the Wick square.

A field is a sum over the stored half-domain cells of ``a_c z_c`` plus the
conjugate mirror contribution, i.e. ``2 Re sum_c a_c z_c`` with one complex
standard Gaussian ``z_c`` per cell. Its covariance is then exactly the full
cell sum of ``a_c(s, x) conj(a_c(t, y))``, which is what the oracle returns.
The normalizing constant c_H is fixed to 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, IncompatibilityError
from .heatkernel import gamma_t
from .hurst import HurstVector
from .mesh import SpectralMesh
from .rng import complex_normals
from .sobolev import PeriodicGrid

PSI, B, WICK = "Psi_n", "B_n", "WickSquare_n"


@dataclass(frozen=True)
class NoiseDraw:
    mesh: SpectralMesh
    seed: int
    sample: int = 0

    @cached_property
    def z(self) -> np.ndarray:
        return complex_normals(self.seed, [self.sample], self.mesh.keys)[0]


def draw_ensemble(mesh: SpectralMesh, seed: int, samples: Iterable[int]) -> np.ndarray:
    """Draws for several samples, shape (S, n_xi, n_eta)."""
    return complex_normals(seed, np.asarray(list(samples)), mesh.keys)


def _times(times) -> np.ndarray:
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(t < 0):
        raise DomainError("times must be nonnegative")
    return t


def _spatial_factor(mesh: SpectralMesh, hurst: HurstVector, sign: float = 1.0, power: float = 0.5):
    """prod sgn(eta_i)|eta_i|^(1/2 - H_i) (power=0.5), or the |.|^(1-2H_i) weight (power=1)."""
    eta = sign * mesh.eta
    h = np.asarray(hurst.spatial)
    mag = np.prod(np.abs(eta) ** (power * (1.0 - 2.0 * h)), axis=1)
    if power == 0.5:
        mag = mag * np.prod(np.sign(eta), axis=1)
    return mag


def psi_amplitude(mesh: SpectralMesh, hurst: HurstVector, times, sign: float = 1.0) -> np.ndarray:
    """Cell amplitudes of Psi_n without the e^{i eta.x} phase, shape (T, n_xi, n_eta).

    ``sign = -1`` evaluates the kernel formula at the mirrored nodes.
    """
    _match(mesh, hurst)
    t = _times(times)
    xi = sign * mesh.xi
    tfac = np.sign(xi) * np.abs(xi) ** (0.5 - hurst.h0) * np.sqrt(mesh.xi_weight)
    sfac = _spatial_factor(mesh, hurst, sign) * np.sqrt(mesh.eta_weight)
    g = gamma_t(t[:, None, None], xi[None, :, None], mesh.eta_norm[None, None, :])
    return (1j ** (mesh.d + 1)) * g * tfac[None, :, None] * sfac[None, None, :]


def _match(mesh: SpectralMesh, hurst: HurstVector):
    if hurst.d != mesh.d:
        raise IncompatibilityError("Hurst vector and mesh dimensions differ")


def _phases(mesh: SpectralMesh, points: np.ndarray, sign: float = 1.0) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, mesh.d)
    return np.exp(1j * sign * (mesh.eta @ pts.T))


def _contract(amp: np.ndarray, z: np.ndarray, spatial: np.ndarray) -> np.ndarray:
    """sum over cells of amp[t, xi, eta] z[s, xi, eta] spatial[eta, p] -> (S, T, P) complex."""
    g = np.matmul(amp.transpose(2, 0, 1), z.transpose(2, 1, 0))  # (eta, T, S)
    ne, T, S = g.shape
    out = g.reshape(ne, T * S).T @ spatial  # (T*S, P)
    return out.reshape(T, S, -1).transpose(1, 0, 2)


def psi_values(mesh: SpectralMesh, hurst, z: np.ndarray, times, points, chunk: int = 256) -> np.ndarray:
    """Psi_n(t, x) for a batch of draws ``z`` (S, n_xi, n_eta): shape (S, T, P)."""
    hurst = HurstVector.of(hurst)
    amp = psi_amplitude(mesh, hurst, times)
    ph = _phases(mesh, points)
    z = np.asarray(z).reshape((-1,) + mesh.shape)
    out = np.empty((z.shape[0], amp.shape[0], ph.shape[1]))
    for a in range(0, z.shape[0], chunk):
        out[a:a + chunk] = 2.0 * _contract(amp, z[a:a + chunk], ph).real
    return out


def psi_full_sum(mesh: SpectralMesh, hurst, z: np.ndarray, times, points) -> np.ndarray:
    """Psi_n summed over cells and explicitly evaluated mirror cells, complex.

    The imaginary part measures the Hermitian pairing; it should vanish.
    """
    hurst = HurstVector.of(hurst)
    z = np.asarray(z).reshape((-1,) + mesh.shape)
    direct = _contract(psi_amplitude(mesh, hurst, times), z, _phases(mesh, points))
    mirror = _contract(psi_amplitude(mesh, hurst, times, sign=-1.0), np.conj(z), _phases(mesh, points, -1.0))
    return direct + mirror


def b_amplitude(mesh: SpectralMesh, hurst: HurstVector, times) -> np.ndarray:
    """Temporal factor (e^{i t xi} - 1)/|xi|^{H0+1/2} sqrt(w), shape (T, n_xi)."""
    t = _times(times)
    fac = np.abs(mesh.xi) ** (-hurst.h0 - 0.5) * np.sqrt(mesh.xi_weight)
    return np.expm1(1j * t[:, None] * mesh.xi[None, :]) * fac[None, :]


def b_spatial(mesh: SpectralMesh, hurst: HurstVector, points) -> np.ndarray:
    """prod_i (e^{i x_i eta_i} - 1)/|eta_i|^{H_i+1/2} sqrt(w), shape (n_eta, P)."""
    pts = np.asarray(points, dtype=float).reshape(-1, mesh.d)
    h = np.asarray(hurst.spatial)
    out = np.ones((mesh.eta.shape[0], pts.shape[0]), dtype=complex)
    for i in range(mesh.d):
        e = mesh.eta[:, i]
        out *= np.expm1(1j * e[:, None] * pts[None, :, i]) * (np.abs(e) ** (-h[i] - 0.5))[:, None]
    return out * np.sqrt(mesh.eta_weight)[:, None]


def b_values(mesh: SpectralMesh, hurst, z: np.ndarray, times, points) -> np.ndarray:
    hurst = HurstVector.of(hurst)
    _match(mesh, hurst)
    a = b_amplitude(mesh, hurst, times)
    z = np.asarray(z).reshape((-1,) + mesh.shape)
    amp = np.broadcast_to(a[:, :, None], a.shape + (mesh.shape[1],))
    return 2.0 * _contract(np.ascontiguousarray(amp), z, b_spatial(mesh, hurst, points)).real


def b_variance(mesh: SpectralMesh, hurst, t: float, x) -> float:
    """Exact E[B_n(t, x)^2]: full cell sum of |kernel|^2 weight."""
    hurst = HurstVector.of(hurst)
    a = b_amplitude(mesh, hurst, [t])[0]
    s = b_spatial(mesh, hurst, np.atleast_2d(x))[:, 0]
    return 2.0 * float(np.sum(np.abs(a) ** 2) * np.sum(np.abs(s) ** 2))


@dataclass
class FieldTrajectory:
    grid: PeriodicGrid
    times: np.ndarray
    values: np.ndarray
    kind: str
    n: int
    seed: int
    imag_residue: float = 0.0

    def records(self) -> Iterable[dict]:
        for t, v in zip(self.times, self.values):
            yield {"kind": self.kind, "n": self.n, "seed": self.seed, "t": float(t),
                   "grid_meta": self.grid.meta(), "values": np.asarray(v).ravel().tolist()}

    def dump_ndjson(self, fh) -> None:
        for rec in self.records():
            fh.write(json.dumps(rec) + "\n")


def _on_grid(values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    return values.reshape((values.shape[0],) + grid.shape)


def synthesize_psi(draw: NoiseDraw, hurst, grid: PeriodicGrid, times) -> FieldTrajectory:
    """One realization of Psi_n on the full grid; records the Hermitian residue."""
    hurst = HurstVector.of(hurst)
    full = psi_full_sum(draw.mesh, hurst, draw.z[None], times, grid.points)[0]
    scale = max(float(np.max(np.abs(full.real))), 1e-300)
    residue = float(np.max(np.abs(full.imag))) / scale
    return FieldTrajectory(grid, _times(times), _on_grid(full.real, grid), PSI,
                           draw.mesh.n, draw.seed, residue)


def synthesize_b(draw: NoiseDraw, hurst, grid: PeriodicGrid, times) -> FieldTrajectory:
    hurst = HurstVector.of(hurst)
    vals = b_values(draw.mesh, hurst, draw.z[None], times, grid.points)[0]
    return FieldTrajectory(grid, _times(times), _on_grid(vals, grid), B, draw.mesh.n, draw.seed)


def covariance_oracle(mesh_n: SpectralMesh, mesh_m: SpectralMesh, hurst, s: float, x, t: float, y) -> float:
    """E[Psi_n(s, x) Psi_m(t, y)] as a deterministic cell sum over D_n and D_m."""
    hurst = HurstVector.of(hurst)
    mesh_n.check_compatible(mesh_m)
    mesh = mesh_n if mesh_n.n <= mesh_m.n else mesh_m
    _match(mesh, hurst)
    w = _weight(mesh, hurst)
    gs = gamma_t(s, mesh.xi[:, None], mesh.eta_norm[None, :])
    gt = gamma_t(t, mesh.xi[:, None], mesh.eta_norm[None, :])
    diff = np.asarray(x, dtype=float).reshape(mesh.d) - np.asarray(y, dtype=float).reshape(mesh.d)
    phase = np.exp(1j * mesh.eta @ diff)
    return 2.0 * float(np.real(np.sum(w * gs * np.conj(gt) * phase[None, :])))


def _weight(mesh: SpectralMesh, hurst: HurstVector) -> np.ndarray:
    """|xi|^{1-2H0} prod |eta_i|^{1-2H_i} times the cell weight."""
    wt = np.abs(mesh.xi) ** (1.0 - 2.0 * hurst.h0) * mesh.xi_weight
    ws = _spatial_factor(mesh, hurst, power=1.0) * mesh.eta_weight
    return wt[:, None] * ws[None, :]


def sigma_disc(mesh: SpectralMesh, hurst, t):
    """sigma_n^disc(t) = E[Psi_n(t, x)^2], the full cell sum of |kernel|^2 weight."""
    hurst = HurstVector.of(hurst)
    _match(mesh, hurst)
    w = _weight(mesh, hurst)
    tt = _times(t)
    out = np.array([2.0 * float(np.sum(w * np.abs(gamma_t(ti, mesh.xi[:, None], mesh.eta_norm[None, :])) ** 2))
                    for ti in tt])
    return float(out[0]) if np.ndim(t) == 0 else out


def wick_square(psi: FieldTrajectory, sigma: Sequence[float]) -> FieldTrajectory:
    """Psi_n^2 - sigma_n^disc(t), pointwise."""
    if psi.kind != PSI:
        raise IncompatibilityError("Wick square needs a Psi_n trajectory")
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if sigma.shape != (len(psi.times),):
        raise IncompatibilityError("one sigma value per trajectory time is required")
    shape = (-1,) + (1,) * psi.grid.d
    vals = psi.values**2 - sigma.reshape(shape)
    return FieldTrajectory(psi.grid, psi.times, vals, WICK, psi.n, psi.seed)


@dataclass(frozen=True)
class Estimate:
    n: int
    mean: float
    stderr: float
    samples: int


def _support(chi, grid: PeriodicGrid):
    prof = chi.on_grid(grid).ravel()
    mask = prof > 0
    return mask, grid.points[mask], prof[mask]


def psi_sq_norms(blocks: Sequence[SpectralMesh], hurst, seed: int, sample_ids, t: float,
                 chi, grid: PeriodicGrid, s: float, chunk: int = 256) -> np.ndarray:
    """||chi * F(t)||_{H^s}^2 per sample, F the Psi-type field carried by ``blocks``."""
    hurst = HurstVector.of(hurst)
    from .sobolev import bessel_norm

    mask, pts, prof = _support(chi, grid)
    ids = np.asarray(list(sample_ids))
    out = np.empty(ids.size)
    for a in range(0, ids.size, chunk):
        part = ids[a:a + chunk]
        vals = np.zeros((part.size, pts.shape[0]))
        for b in blocks:
            vals += psi_values(b, hurst, draw_ensemble(b, seed, part), [t], pts)[:, 0, :]
        full = np.zeros((part.size, mask.size))
        full[:, mask] = prof[None, :] * vals
        out[a:a + chunk] = bessel_norm(full.reshape((part.size,) + grid.shape), (s, 2.0), grid) ** 2
    return out


def expected_sq_norm(blocks: Sequence[SpectralMesh], hurst, t: float, chi, grid: PeriodicGrid, s: float) -> float:
    """Exact E||chi * F(t)||_{H^s}^2 for the field carried by ``blocks``.

    With F = 2 Re sum a_c z_c the expectation is 2 sum_c ||Op(chi a_c)||^2,
    and chi a_c = amp_c chi e^{i eta_c . x}.
    """
    hurst = HurstVector.of(hurst)
    prof = chi.on_grid(grid)
    mult = _full_multiplier(grid, s)
    total = 0.0
    pts = grid.points
    for b in blocks:
        amp2 = np.sum(np.abs(psi_amplitude(b, hurst, [t])[0]) ** 2, axis=0)  # per eta
        for e, a2 in zip(b.eta, amp2):
            g = prof * np.exp(1j * (pts @ e)).reshape(grid.shape)
            spec = np.fft.fftn(g)
            norm2 = np.sum(mult * np.abs(spec) ** 2) * grid.spacing**grid.d / grid.N**grid.d
            total += 2.0 * a2 * norm2
    return float(total)


def _full_multiplier(grid: PeriodicGrid, s: float) -> np.ndarray:
    k = np.pi * np.fft.fftfreq(grid.N, d=1.0 / grid.N) / grid.L
    ks = np.meshgrid(*([k] * grid.d), indexing="ij")
    return (1.0 + sum(x * x for x in ks)) ** s


def cauchy_decay(hurst, s: float, n_range: Sequence[int], samples: int, seed: int, chi,
                 t: float = 1.0, grid: Optional[PeriodicGrid] = None, **mesh_kw) -> list:
    """Monte Carlo E||chi (Psi_{n+1} - Psi_n)(t)||_{H^s}^2 for n in ``n_range``.

    The difference is synthesized from the shell cells D_{n+1} minus D_n,
    with the same keyed draws as the full fields.
    """
    from .mesh import build_mesh, shell_blocks
    from .sobolev import grid_for_frequency

    hurst = HurstVector.of(hurst)
    n_range = list(n_range)
    if grid is None:
        grid = grid_for_frequency(hurst.d, 2.0 ** (max(n_range) + 1) + 16.0)
    rows = []
    for n in n_range:
        blocks = shell_blocks(build_mesh(hurst.d, n, **mesh_kw), build_mesh(hurst.d, n + 1, **mesh_kw))
        vals = psi_sq_norms(blocks, hurst, seed, range(samples), t, chi, grid, s)
        rows.append(Estimate(n, float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)), samples))
    return rows


def probe_values(mesh: SpectralMesh, hurst, seed: int, samples: int, times, points, chunk: int = 250):
    """Psi_n at every (time, point) pair for samples 0..samples-1, yielded in chunks (S, T, P)."""
    hurst = HurstVector.of(hurst)
    points = np.asarray(points, dtype=float).reshape(-1, mesh.d)
    for a in range(0, samples, chunk):
        ids = np.arange(a, min(a + chunk, samples))
        yield psi_values(mesh, hurst, draw_ensemble(mesh, seed, ids), times, points)


def _mean_se(x: np.ndarray):
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")


def covariance_estimate(mesh: SpectralMesh, hurst, seed: int, samples: int, probes, chunk: int = 250) -> list:
    """Sample mean and standard error of Psi_n(s, x) Psi_n(t, y) per probe (s, x, t, y)."""
    probes = [(float(s), np.atleast_1d(x), float(t), np.atleast_1d(y)) for s, x, t, y in probes]
    times = sorted({p[0] for p in probes} | {p[2] for p in probes})
    points = np.concatenate([np.stack([p[1], p[3]]) for p in probes])
    prods = np.empty((samples, len(probes)))
    a = 0
    for vals in probe_values(mesh, hurst, seed, samples, times, points, chunk):
        for k, (s, _, t, _) in enumerate(probes):
            prods[a:a + vals.shape[0], k] = vals[:, times.index(s), 2 * k] * vals[:, times.index(t), 2 * k + 1]
        a += vals.shape[0]
    return [_mean_se(prods[:, k]) for k in range(len(probes))]


def wick_moments(mesh: SpectralMesh, hurst, seed: int, samples: int, probes, chunk: int = 250) -> list:
    """Per probe (t, x): (mean, se) of Wick_n(t, x), (mean, se) of its square, sigma_n^disc(t)."""
    probes = [(float(t), np.atleast_1d(x)) for t, x in probes]
    times = sorted({p[0] for p in probes})
    sig = {t: sigma_disc(mesh, hurst, t) for t in times}
    points = np.stack([p[1] for p in probes])
    wick = np.empty((samples, len(probes)))
    a = 0
    for vals in probe_values(mesh, hurst, seed, samples, times, points, chunk):
        for k, (t, _) in enumerate(probes):
            wick[a:a + vals.shape[0], k] = vals[:, times.index(t), k] ** 2 - sig[t]
        a += vals.shape[0]
    return [(_mean_se(wick[:, k]), _mean_se(wick[:, k] ** 2), sig[t]) for k, (t, _) in enumerate(probes)]
