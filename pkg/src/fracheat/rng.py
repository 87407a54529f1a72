"""Counter-based random numbers: a value is a pure function of its coordinates.

Draws are addressed by (master seed, sample index, cell key), which makes
ensembles reproducible independent of chunking and worker count, and lets
meshes of different truncation levels share the draws of common cells.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer (bijective on uint64)."""
    x = np.array(x, dtype=np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    x ^= x >> np.uint64(31)
    return x


def _mix_int(x: int) -> int:
    return int(mix64(np.array([x & _MASK], dtype=np.uint64))[0])


def stream_key(seed: int, *coords: int) -> int:
    """Key of a sub-stream, e.g. stream_key(seed, sample)."""
    k = _mix_int(int(seed) ^ 0x5851F42D4C957F2D)
    for c in coords:
        k = _mix_int((k + (int(c) + 1) * 0x9E3779B97F4A7C15) & _MASK)
    return k


def complex_normals(seed: int, samples, keys: np.ndarray) -> np.ndarray:
    """Standard complex Gaussians (E|z|^2 = 1, E z^2 = 0), shape (len(samples),) + keys.shape.

    One 64-bit hash per value: the high and low 32-bit halves give the
    radius and angle uniforms of a Box-Muller transform.
    """
    samples = np.atleast_1d(np.asarray(samples, dtype=np.int64))
    hk = mix64(keys.astype(np.uint64) * _GOLDEN)
    out = np.empty((samples.size,) + keys.shape, dtype=complex)
    for i, s in enumerate(samples):
        h = mix64(hk ^ np.uint64(stream_key(seed, int(s))))
        u1 = ((h >> np.uint64(32)).astype(np.float64) + 0.5) * 2.0**-32
        u2 = (h & np.uint64(0xFFFFFFFF)).astype(np.float64) * 2.0**-32
        out[i] = np.sqrt(-np.log(u1)) * np.exp(2j * np.pi * u2)
    return out
