"""Picard fixed-point solver for the mild equation of the remainder v = u - Psi.

Regular regime:  v_t = e^{t Lap} phi + int_0^t e^{(t-s) Lap} (rho^2 v^2 + 2 rho v psi + psi^2) ds
Rough regime:    psi^2 is replaced by a supplied Wick trajectory psi2.

Time stepping is first-order exponential: u_{j+1} = e^{dt Lap} u_j + dt phi1(dt Lap) f_j
with phi1(z) = (e^z - 1)/z, which is exact for forcing constant on each step.
All arrays carry time on axis -(d+1) and may have leading batch axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import BlowupError, ConfigError, NoLocalSolutionError
from .hurst import REGULAR, HurstVector
from .mesh import build_mesh
from .noise import draw_ensemble, psi_values, sigma_disc
from .sobolev import CutoffFn, PeriodicGrid, bessel_norm

REGULAR_REGIME, ROUGH_REGIME = "regular", "rough"
_BLOWUP = 1e100


def default_beta(alpha: float, d: int, p: float) -> float:
    """Midpoint of the admissible beta window (alpha, min(2 - alpha - d/p, 2 - 2 alpha))."""
    return 0.5 * (alpha + min(2.0 - alpha - d / p, 2.0 - 2.0 * alpha))


@dataclass
class SolverConfig:
    regime: str
    grid: PeriodicGrid
    rho: CutoffFn
    alpha: float = 0.0
    beta: float = 0.5
    p: float = 2.0
    T: float = 0.5
    dt: float = 0.01
    tol: float = 1e-10
    max_iter: int = 200
    max_halvings: int = 12
    phi: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.regime not in (REGULAR_REGIME, ROUGH_REGIME):
            raise ConfigError(f"unknown regime {self.regime!r}")
        if not (0 < self.T <= 1):
            raise ConfigError("horizon T must lie in (0, 1]")
        if not (0 < self.dt <= self.T):
            raise ConfigError("time step must lie in (0, T]")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigError("T must be an integer multiple of dt")
        if self.p < 2:
            raise ConfigError("p must be >= 2")
        if self.phi is None:
            self.phi = np.zeros(self.grid.shape)
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.shape != self.grid.shape:
            raise ConfigError("initial datum does not match the grid")
        self.rho.check_grid(self.grid)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    def validate(self, hurst) -> None:
        """Parameter windows required by the well-posedness statements."""
        hurst = HurstVector.of(hurst)
        d, a, b, p = hurst.d, self.alpha, self.beta, self.p
        if hurst.d != self.grid.d:
            raise ConfigError("Hurst vector and grid dimensions differ")
        if self.regime == REGULAR_REGIME:
            if REGULAR not in hurst.tags:
                raise ConfigError(f"H={hurst.h} is not in the regular regime")
            if not (0 < b < hurst.alpha_h):
                raise ConfigError(f"beta must lie in (0, alpha_H = {hurst.alpha_h:.4g})")
            if not d / (2 * p) < 1 + b / 2:
                raise ConfigError("need d/(2p) < 1 + beta/2")
        else:
            if not hurst.is_rough:
                raise ConfigError(f"H={hurst.h} is not in a rough regime")
            lo, hi = hurst.rough_alpha_window()
            if not (lo < a < hi):
                raise ConfigError(f"alpha must lie in ({lo:.4g}, {hi:.4g})")
            if not (a < b < min(2 - a - d / p, 2 - 2 * a)):
                raise ConfigError("beta outside (alpha, min(2 - alpha - d/p, 2 - 2 alpha))")
            if not d / (2 * p) < 1:
                raise ConfigError("need d/(2p) < 1")

    def truncated(self, steps: int) -> "SolverConfig":
        return replace(self, T=steps * self.dt)


@dataclass
class SolverState:
    v: np.ndarray
    times: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    norms: dict = field(default_factory=dict)


def _operators(cfg: SolverConfig):
    k2 = cfg.grid.k2
    decay = np.exp(-cfg.dt * k2)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi1 = np.where(k2 > 0, -np.expm1(-cfg.dt * k2) / k2, cfg.dt)
    return decay, phi1


def _axes(grid: PeriodicGrid):
    return tuple(range(-grid.d, 0))


def duhamel(forcing: np.ndarray, cfg: SolverConfig, initial: Optional[np.ndarray] = None) -> np.ndarray:
    """u_0 = initial, u_{j+1} = e^{dt Lap} u_j + dt phi1(dt Lap) f_j on the time grid."""
    grid = cfg.grid
    axes = _axes(grid)
    tax = -grid.d - 1
    decay, phi1 = _operators(cfg)
    fhat = np.fft.rfftn(forcing, axes=axes)
    fhat = np.moveaxis(fhat, tax, 0)
    out = np.empty_like(fhat)
    u0 = np.zeros(grid.shape) if initial is None else initial
    out[0] = np.broadcast_to(np.fft.rfftn(u0, axes=axes), out[0].shape)
    for j in range(fhat.shape[0] - 1):
        out[j + 1] = decay * out[j] + phi1 * fhat[j]
    out = np.moveaxis(out, 0, tax)
    return np.fft.irfftn(out, s=grid.shape, axes=axes)


def _rho(cfg: SolverConfig) -> np.ndarray:
    return cfg.rho.on_grid(cfg.grid)


def _check_finite(v: np.ndarray):
    if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > _BLOWUP:
        raise BlowupError("non-finite or exploding iterate")


def gamma_map(v, psi, square, cfg: SolverConfig, rho: Optional[np.ndarray] = None, linear: float = 1.0):
    """Gamma(v) with the given squared-noise forcing ``square`` (psi^2 or Wick)."""
    rho = _rho(cfg) if rho is None else rho
    with np.errstate(over="ignore", invalid="ignore"):
        rv = rho * v
        f = linear * (rv * rv + 2.0 * rv * psi) + square
    _check_finite(f)
    out = duhamel(f, cfg, cfg.phi)
    _check_finite(out)
    return out


def gamma_map_regular(v, psi, cfg: SolverConfig, rho=None):
    return gamma_map(v, psi, psi * psi, cfg, rho)


def gamma_map_rough(v, psi, psi2, cfg: SolverConfig, rho=None):
    return gamma_map(v, psi, psi2, cfg, rho)


def _sup(x: np.ndarray) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


def solution_norms(v: np.ndarray, cfg: SolverConfig) -> dict:
    """sup_t ||v||_{-alpha,p}, sup_{t >= dt} t^{(beta+alpha)/2} ||v||_{beta,p} and their sum."""
    g = cfg.grid
    low = bessel_norm(v, (-cfg.alpha, cfg.p), g)
    high = bessel_norm(v, (cfg.beta, cfg.p), g)
    t = cfg.dt * np.arange(v.shape[-g.d - 1])
    w = t[1:] ** (0.5 * (cfg.beta + cfg.alpha))
    low_sup = float(np.max(low))
    weighted = float(np.max(w * np.moveaxis(high, -1, 0)[1:].T)) if t.size > 1 else 0.0
    return {"sup_low": low_sup, "weighted_high": weighted, "X": low_sup + weighted,
            "sup_high": float(np.max(high))}


def _batch_sup(x: np.ndarray, d: int) -> np.ndarray:
    """Per-sample sup over time and space (0-d array when unbatched)."""
    return np.max(np.abs(x), axis=tuple(range(x.ndim - d - 1, x.ndim)))


def _guarded_step(v, psi, square, cfg: SolverConfig, rho, alive):
    """One application of Gamma; samples that overflow are zeroed and marked dead."""
    d = cfg.grid.d
    live = alive.reshape(alive.shape + (1,) * (d + 1))
    with np.errstate(over="ignore", invalid="ignore"):
        rv = rho * v
        f = np.where(live, rv * rv + 2.0 * rv * psi + square, 0.0)
        new = duhamel(np.where(np.isfinite(f), f, np.inf), cfg, cfg.phi)
        sup = _batch_sup(new, d)
    alive = alive & np.isfinite(sup) & (sup <= _BLOWUP)
    return np.where(alive.reshape(live.shape), new, 0.0), alive


def _iterate(cfg: SolverConfig, psi, square, rho):
    """Picard iteration from 0 with per-sample bookkeeping.

    Returns (v, iterations, residual, history, ok). A sample is ok when its
    relative change decreased monotonically to below ``tol`` and the extra
    application of Gamma confirms the residual. Overflowing samples are
    frozen at zero and flagged, so one bad draw cannot spoil a batch.
    """
    d = cfg.grid.d
    v = np.zeros(np.broadcast_shapes(psi.shape, square.shape))
    batch = v.shape[: v.ndim - d - 1]
    prev = np.full(batch, np.inf)
    alive = np.ones(batch, dtype=bool)
    monotone = np.ones(batch, dtype=bool)
    history = []
    for it in range(1, cfg.max_iter + 1):
        new, alive = _guarded_step(v, psi, square, cfg, rho, alive)
        change = _batch_sup(new - v, d) / (1.0 + _batch_sup(new, d))
        # slack absorbs rounding once the change reaches machine level
        monotone &= (change <= prev * (1 + 1e-6)) | (change < cfg.tol)
        prev = change
        history.append(float(np.max(change)))
        v = new
        if np.all(change < cfg.tol):
            check, alive = _guarded_step(v, psi, square, cfg, rho, alive)
            residual = _batch_sup(v - check, d) / (1.0 + _batch_sup(v, d))
            return v, it, residual, history, alive & monotone & (residual <= cfg.tol)
    return v, cfg.max_iter, prev, history, np.zeros(batch, dtype=bool)


def _inputs(cfg: SolverConfig, psi, psi2, steps: int):
    tax = -cfg.grid.d - 1
    sl = [slice(None)] * np.ndim(psi)
    sl[tax] = slice(0, steps + 1)
    p1 = np.asarray(psi)[tuple(sl)]
    if cfg.regime == REGULAR_REGIME or psi2 is None:
        return p1, p1 * p1
    return p1, np.asarray(psi2)[tuple(sl)]


def picard_solve(cfg: SolverConfig, psi: np.ndarray, psi2: Optional[np.ndarray] = None):
    """Iterate v <- Gamma(v) from 0; halve T on failure. Returns (state, T0).

    ``psi`` (and ``psi2`` in the rough regime) live on the full time grid of
    ``cfg``; halving truncates them. Leading axes are samples, all of which
    must succeed for a horizon to be accepted.
    """
    if cfg.regime == ROUGH_REGIME and psi2 is None:
        raise ConfigError("rough regime needs the Wick trajectory psi2")
    steps = cfg.steps
    rho = _rho(cfg)
    for _ in range(cfg.max_halvings + 1):
        c = cfg.truncated(steps)
        v, it, residual, history, ok = _iterate(c, *_inputs(c, psi, psi2, steps), rho)
        if np.all(ok):
            state = SolverState(v, c.times, it, float(np.max(residual)), history)
            state.norms = solution_norms(v, c)
            return state, c.T
        if steps < 2:
            break
        steps //= 2
    raise NoLocalSolutionError("no contracting fixed-point iteration after halving T",
                               horizon=steps * cfg.dt, residual=float(np.max(residual)))


def solve_batch(cfg: SolverConfig, psi: np.ndarray, psi2: Optional[np.ndarray] = None):
    """Solve every sample at the full horizon without halving: (v, ok).

    Samples without a contracting iteration at T are flagged, not retried,
    so all accepted samples share the same horizon.
    """
    v, _, _, _, ok = _iterate(cfg, *_inputs(cfg, psi, psi2, cfg.steps), _rho(cfg))
    return v, ok


def contraction_constant(cfg: SolverConfig, psi, square, radius: float, pairs: int, seed: int,
                         modes: int = 12) -> float:
    """Largest observed ||Gamma(v1) - Gamma(v2)||_X / ||v1 - v2||_X on an X-ball.

    The nonlinearity of Gamma is evaluated with phi = 0 (it cancels in the
    difference). Random iterates are smooth in space and time.
    """
    from .sobolev import random_modes, synthesize_modes

    rng = np.random.default_rng(seed)
    rho = _rho(cfg)
    g = cfg.grid
    t = cfg.times
    best = 0.0
    for _ in range(pairs):
        vs = []
        for _ in range(2):
            space = synthesize_modes(random_modes(g.d, modes, rng, decay=1.0), g)
            amp = rng.uniform(0.2, 1.0)
            prof = np.cos(rng.uniform(0, np.pi) * t / max(cfg.T, 1e-12))
            v = prof.reshape((-1,) + (1,) * g.d) * space[None]
            v *= amp * radius / solution_norms(v, cfg)["X"]
            vs.append(v)
        diff_in = solution_norms(vs[0] - vs[1], cfg)["X"]
        out = [gamma_map(v, psi, square, cfg, rho) for v in vs]
        best = max(best, solution_norms(out[0] - out[1], cfg)["X"] / diff_in)
    return best


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    mean: float
    rms: float
    median: float
    stderr: float
    samples: int
    horizon: float
    failures: int = 0


def stochastic_inputs(cfg: SolverConfig, hurst, mesh, sample_ids, seed: int, points_mask: np.ndarray):
    """Psi_n on the grid (zero off ``points_mask``), rho Psi_n and the Wick forcing."""
    hurst = HurstVector.of(hurst)
    g = cfg.grid
    t = cfg.times
    pts = g.points[points_mask.ravel()]
    z = draw_ensemble(mesh, seed, sample_ids)
    vals = psi_values(mesh, hurst, z, t, pts)
    S = len(sample_ids)
    psi_full = np.zeros((S, t.size, points_mask.size))
    psi_full[:, :, points_mask.ravel()] = vals
    psi_full = psi_full.reshape((S, t.size) + g.shape)
    rho = _rho(cfg)
    psi = rho * psi_full
    if cfg.regime == ROUGH_REGIME:
        sig = sigma_disc(mesh, hurst, t).reshape((-1,) + (1,) * g.d)
        square = rho * rho * (psi_full * psi_full - sig)
    else:
        square = psi * psi
    return psi_full, psi, square


def assemble_and_converge(cfg: SolverConfig, hurst, n_range: Sequence[int], seed: int, chi: CutoffFn,
                          samples: int = 1, chunk: int = 200, **mesh_kw) -> list:
    """Solve per level n on common draws and report ||chi (u_{n+1} - u_n)|| per n.

    The norm is sup_t W^{beta,p} (regular) or sup_t W^{-alpha,p} (rough).
    Statistics run over the samples that have a local solution at horizon T
    for every level; ``failures`` counts the others at levels n or n+1.
    """
    hurst = HurstVector.of(hurst)
    cfg.validate(hurst)
    n_range = list(n_range)
    if len(n_range) < 2:
        return []
    g = cfg.grid
    chi_g = chi.on_grid(g)
    mask = (chi_g > 0) | (_rho(cfg) > 0)
    s = cfg.beta if cfg.regime == REGULAR_REGIME else -cfg.alpha
    meshes = {n: build_mesh(hurst.d, n, **mesh_kw) for n in n_range}
    norms = np.full((len(n_range) - 1, samples), np.nan)
    valid = np.zeros((len(n_range), samples), dtype=bool)
    for a in range(0, samples, chunk):
        ids = list(range(a, min(a + chunk, samples)))
        prev = None
        for i, n in enumerate(n_range):
            psi_full, psi, square = stochastic_inputs(cfg, hurst, meshes[n], ids, seed, mask)
            v, ok = solve_batch(cfg, psi, square)
            u = chi_g * (v + psi_full)
            valid[i, a:a + len(ids)] = ok
            if prev is not None:
                norms[i - 1, a:a + len(ids)] = np.max(bessel_norm(u - prev, (s, cfg.p), g), axis=1)
            prev = u
    common = np.all(valid, axis=0)
    rows = []
    for i, n in enumerate(n_range[:-1]):
        x = norms[i, common]
        m = x.size
        nan = math.nan
        rows.append(ConvergenceRow(
            n, float(x.mean()) if m else nan, float(np.sqrt(np.mean(x**2))) if m else nan,
            float(np.median(x)) if m else nan, float(x.std(ddof=1) / math.sqrt(m)) if m > 1 else nan,
            m, cfg.T, int(np.sum(~(valid[i] & valid[i + 1])))))
    return rows
