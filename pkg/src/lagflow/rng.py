"""
Portable seeded random fields.

The generator is SplitMix64 used in counter mode: sample ``i`` (0-based,
row-major over the grid, x fastest) of stream ``s`` for seed ``seed`` is

    z  = seed + (s * N + i + 1) * 0x9E3779B97F4A7C15        (mod 2^64)
    z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9               (mod 2^64)
    z  = (z ^ (z >> 27)) * 0x94D049BB133111EB               (mod 2^64)
    z  =  z ^ (z >> 31)
    u  = (z >> 11) * 2^-53                                   in [0, 1)

with ``N = nx * ny``.  Stream 0 reproduces the usual sequential
SplitMix64 output for that seed, so fields can be regenerated in any
language from the seed alone.
"""

from __future__ import annotations

import numpy as np

from .spectral import Grid

__all__ = ["splitmix64", "uniform01", "seeded_random_field"]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def splitmix64(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Outputs ``offset .. offset + count - 1`` of SplitMix64 seeded with ``seed``."""
    if count < 0 or offset < 0:
        raise ValueError("count and offset must be non-negative")
    seed = int(seed)
    if not 0 <= seed <= _MASK:
        raise ValueError("seed must be a 64-bit unsigned integer")
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform01(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Doubles in ``[0, 1)`` from the top 53 bits of each SplitMix64 output."""
    z = splitmix64(seed, count, offset)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def seeded_random_field(
    grid: Grid,
    seed: int,
    lo: float = -1.0,
    hi: float = 1.0,
    zero_mean: bool = False,
    stream: int = 0,
) -> np.ndarray:
    """
    Pointwise uniform samples on ``[lo, hi)``.

    Parameters
    ----------
    stream : int
        Independent field index for the same seed (e.g. 0 for ``u``, 1
        for ``v``); it offsets the counter by ``stream * nx * ny``.
    zero_mean : bool
        Subtract the sample mean afterwards.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got {lo}, {hi}")
    if stream < 0:
        raise ValueError("stream must be non-negative")
    n = grid.nx * grid.ny
    u = uniform01(seed, n, offset=stream * n).reshape(grid.shape)
    field = lo + (hi - lo) * u
    if zero_mean:
        field = field - field.mean()
    return field
