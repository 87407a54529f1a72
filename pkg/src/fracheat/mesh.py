"""Quadrature meshes of the truncated frequency domain D_n.

D_n = {|xi| <= 4^n} x {|eta| <= 2^n} (Euclidean ball in eta). Only the
half xi > 0 is stored; the mirror cell (-xi, -eta) is implicit. Meshes are
tensor products of a xi axis and an eta cell set, both graded dyadically
toward zero (and, for d = 2, toward the coordinate axes in angle).

Every cell carries a global integer key that depends only on the grading
rule, never on n, so the mesh of level n is a subset of the mesh of level
n + 1 with identical keys. Noise draws are keyed on these ids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BudgetError, DomainError, IncompatibilityError

MAX_LEVEL = {1: 12, 2: 8}
MAX_CELLS = 10**7
_ETA_SHIFT = 40


def dyadic_axis(top: int, depth: int, res: int):
    """Cells of (0, 2^top]: a core [0, 2^-depth] then ``res`` cells per band [2^k, 2^(k+1)].

    Returns (lo, hi, ids); ids are independent of ``top``.
    """
    lo, hi, ids = [0.0], [2.0**-depth], [0]
    for k in range(-depth, top):
        a, b = 2.0**k, 2.0 ** (k + 1)
        edges = a + (b - a) * np.arange(res + 1) / res
        lo.extend(edges[:-1])
        hi.extend(edges[1:])
        ids.extend(1 + (k + depth) * res + np.arange(res))
    return np.array(lo), np.array(hi), np.array(ids, dtype=np.int64)


def angular_cells(levels: int, res: int):
    """Cells of the circle graded toward the four half-axes.

    Each quadrant (0, pi/2) is split at pi/4; each half is graded dyadically
    toward its axis with ``res`` cells per level and a core cell.
    """
    q = 0.25 * np.pi
    lo_h, hi_h = [0.0], [q * 2.0**-levels]
    for k in range(levels, 0, -1):
        a, b = q * 2.0**-k, q * 2.0 ** (1 - k)
        edges = a + (b - a) * np.arange(res + 1) / res
        lo_h.extend(edges[:-1])
        hi_h.extend(edges[1:])
    lo_h, hi_h = np.array(lo_h), np.array(hi_h)
    # mirror of the lower half onto (pi/4, pi/2)
    quad_lo = np.concatenate([lo_h, 0.5 * np.pi - hi_h[::-1]])
    quad_hi = np.concatenate([hi_h, 0.5 * np.pi - lo_h[::-1]])
    lo = np.concatenate([quad_lo + 0.5 * np.pi * j for j in range(4)])
    hi = np.concatenate([quad_hi + 0.5 * np.pi * j for j in range(4)])
    return lo, hi


@dataclass(frozen=True)
class SpectralMesh:
    """Half-domain mesh: xi cells (xi > 0) times eta cells."""

    d: int
    n: int
    resolution: int
    depth: int
    angular_levels: int
    angular_resolution: int
    xi: np.ndarray = field(repr=False)
    xi_weight: np.ndarray = field(repr=False)
    xi_key: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)
    eta_weight: np.ndarray = field(repr=False)
    eta_key: np.ndarray = field(repr=False)

    @property
    def rule(self) -> tuple:
        return (self.d, self.resolution, self.depth, self.angular_levels, self.angular_resolution)

    @property
    def shape(self) -> tuple:
        return (self.xi.size, self.eta.shape[0])

    @property
    def size(self) -> int:
        return self.xi.size * self.eta.shape[0]

    @property
    def eta_norm(self) -> np.ndarray:
        return np.linalg.norm(self.eta, axis=1)

    @cached_property
    def keys(self) -> np.ndarray:
        """Global cell keys, shape (n_xi, n_eta), uint64."""
        return (self.xi_key.astype(np.uint64)[:, None] << np.uint64(_ETA_SHIFT)) | self.eta_key.astype(np.uint64)[None, :]

    @property
    def weights(self) -> np.ndarray:
        return self.xi_weight[:, None] * self.eta_weight[None, :]

    def total_weight(self) -> float:
        """Lebesgue measure covered by the cells and their mirrors."""
        return 2.0 * float(self.xi_weight.sum() * self.eta_weight.sum())

    def domain_measure(self) -> float:
        ball = 2.0 * 2.0**self.n if self.d == 1 else np.pi * 4.0**self.n
        return 2.0 * 4.0**self.n * ball

    def cells(self):
        """Full cell list: nodes (2M, 1+d), weights (2M,), mirror index (2M,).

        Cells 0..M-1 are the stored half, cell i + M is the mirror of cell i.
        """
        nx, ne = self.shape
        xi = np.repeat(self.xi, ne)
        eta = np.tile(self.eta, (nx, 1))
        half = np.column_stack([xi, eta])
        nodes = np.concatenate([half, -half])
        w = np.tile(self.weights.ravel(), 2)
        m = half.shape[0]
        mirror = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
        return nodes, w, mirror

    def check_compatible(self, other: "SpectralMesh"):
        if self.rule != other.rule:
            raise IncompatibilityError("meshes were built with different grading rules")

    def restrict(self, n: int) -> "SpectralMesh":
        """Sub-mesh of a lower level (same keys)."""
        if n > self.n:
            raise DomainError("can only restrict to a lower level")
        return build_mesh(self.d, n, self.resolution, self.depth, self.angular_levels, self.angular_resolution)


DEFAULTS = {1: dict(resolution=4, depth=6), 2: dict(resolution=2, depth=5)}


def build_mesh(d: int, n: int, resolution: int | None = None, depth: int | None = None,
               angular_levels: int = 3, angular_resolution: int = 2) -> SpectralMesh:
    if d not in (1, 2):
        raise DomainError("meshes exist for d in {1, 2}")
    if not (1 <= n <= MAX_LEVEL[d]):
        raise DomainError(f"truncation level must be in [1, {MAX_LEVEL[d]}] for d={d}")
    resolution = DEFAULTS[d]["resolution"] if resolution is None else int(resolution)
    depth = DEFAULTS[d]["depth"] if depth is None else int(depth)
    if resolution < 1 or depth < 0:
        raise DomainError("resolution must be >= 1 and depth >= 0")

    n_xi = 1 + (2 * n + depth) * resolution
    n_r = 1 + (n + depth) * resolution
    n_eta = 2 * n_r if d == 1 else n_r * 4 * 2 * (1 + angular_levels * angular_resolution)
    if n_xi * n_eta > MAX_CELLS:
        raise BudgetError(f"{n_xi * n_eta} cells exceed the budget of {MAX_CELLS}")

    lo, hi, xid = dyadic_axis(2 * n, depth, resolution)
    xi, xw = 0.5 * (lo + hi), hi - lo
    rlo, rhi, rid = dyadic_axis(n, depth, resolution)
    if d == 1:
        mid, w = 0.5 * (rlo + rhi), rhi - rlo
        eta = np.concatenate([mid, -mid])[:, None]
        ew = np.concatenate([w, w])
        ekey = np.concatenate([2 * rid, 2 * rid + 1])
    else:
        alo, ahi = angular_cells(angular_levels, angular_resolution)
        rm, am = 0.5 * (rlo + rhi), 0.5 * (alo + ahi)
        R, A = np.meshgrid(rm, am, indexing="ij")
        eta = np.column_stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()])
        ew = np.outer(0.5 * (rhi**2 - rlo**2), ahi - alo).ravel()
        ekey = (rid[:, None] * 4096 + np.arange(alo.size)[None, :]).ravel()
    return SpectralMesh(d, n, resolution, depth, angular_levels, angular_resolution,
                        xi, xw, xid, eta, ew, ekey.astype(np.int64))


def sub_mesh(mesh: SpectralMesh, xi_index, eta_index) -> SpectralMesh:
    """Tensor block of a mesh, keeping global keys (used for shells)."""
    xi_index, eta_index = np.asarray(xi_index), np.asarray(eta_index)
    return SpectralMesh(
        mesh.d, mesh.n, mesh.resolution, mesh.depth, mesh.angular_levels, mesh.angular_resolution,
        mesh.xi[xi_index], mesh.xi_weight[xi_index], mesh.xi_key[xi_index],
        mesh.eta[eta_index], mesh.eta_weight[eta_index], mesh.eta_key[eta_index],
    )


def shell_blocks(lower: SpectralMesh, upper: SpectralMesh) -> list:
    """Cells of ``upper`` not in ``lower`` as two tensor blocks.

    D_m minus D_n = (new xi, all eta) union (old xi, new eta).
    """
    lower.check_compatible(upper)
    if lower.n >= upper.n:
        raise DomainError("lower mesh must have the smaller truncation level")
    old_xi = np.isin(upper.xi_key, lower.xi_key)
    old_eta = np.isin(upper.eta_key, lower.eta_key)
    blocks = []
    if np.any(~old_xi):
        blocks.append(sub_mesh(upper, np.nonzero(~old_xi)[0], np.arange(upper.eta.shape[0])))
    if np.any(old_xi) and np.any(~old_eta):
        blocks.append(sub_mesh(upper, np.nonzero(old_xi)[0], np.nonzero(~old_eta)[0]))
    return blocks
