"""Histogram of Single Direction Gradient.

For a fixed direction the descriptor takes, at every center P_V, the signed
difference ``g(P_V + offset) - g(P_V)``, quantizes it into ``n_quant`` bins
and histograms the result.

Directions 1-9 look ``r_t`` frames back, 10-18 look ``r_t`` frames ahead,
with the same nine spatial steps in the same order::

    1 (0, 0)   2 (-x, 0)   3 (-x, +y)   4 (0, +y)   5 (+x, +y)
    6 (+x, 0)  7 (+x, -y)  8 (0, -y)    9 (-x, -y)

Y grows downward, so a ``+y`` step points to a lower image row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lbp import CenterRegion, _check_region
from .volume import VideoVolume

N_DIRECTIONS = 18
_SPATIAL = ((0, 0), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


@dataclass(frozen=True)
class DirectionOffset:
    dx: int
    dy: int
    dt: int

    def __post_init__(self):
        if self.dt == 0:
            raise ValueError("direction offsets must have a non-zero temporal step")

    def as_tuple(self):
        return self.dx, self.dy, self.dt


@dataclass(frozen=True)
class HsdgParams:
    direction: int = 1
    r_x: int = 1
    r_y: int = 1
    r_t: int = 1
    n_quant: int = 2

    def __post_init__(self):
        if not 1 <= self.direction <= N_DIRECTIONS:
            raise ValueError(f"direction must lie in 1..18, got {self.direction}")
        if self.r_t < 1:
            raise ValueError("r_t must be >= 1")
        if self.r_x < 0 or self.r_y < 0:
            raise ValueError("spatial radii must be >= 0")
        if not 2 <= self.n_quant <= 511:
            raise ValueError(f"n_quant must lie in 2..511, got {self.n_quant}")

    @property
    def offset(self) -> DirectionOffset:
        return direction_offset(self.direction, self.r_x, self.r_y, self.r_t)


def direction_offset(direction: int, r_x: int, r_y: int, r_t: int) -> DirectionOffset:
    if not 1 <= direction <= N_DIRECTIONS:
        raise ValueError(f"direction must lie in 1..18, got {direction}")
    sx, sy = _SPATIAL[(direction - 1) % 9]
    st = -1 if direction <= 9 else 1
    return DirectionOffset(sx * r_x, sy * r_y, st * r_t)


def sdg_gradient(v: VideoVolume, center, off: DirectionOffset) -> float:
    """``g(center + off) - g(center)``."""
    x, y, t = center
    nx, ny, nt = x + off.dx, y + off.dy, t + off.dt
    assert 0 <= nx < v.width and 0 <= ny < v.height and 0 <= nt < v.frames, \
        f"neighbor {(nx, ny, nt)} outside volume {v.shape}"
    return float(v.data[nt, ny, nx]) - float(v.data[t, y, x])


def quantize_edges(n: int) -> np.ndarray:
    """Lower edges of bins 1..n-1: ``floor(-255 + 511*k/n)``, in exact integer arithmetic."""
    k = np.arange(1, n)
    return (-255 * n + 511 * k) // n


def quantize(g, n: int):
    """Bin index of gradient(s) ``g`` in [-255, 255]; monotone, onto 0..n-1."""
    if not 2 <= n <= 511:
        raise ValueError(f"bin count must lie in 2..511, got {n}")
    arr = np.asarray(g)
    if np.any(arr < -255) or np.any(arr > 255):
        raise ValueError("gradient outside [-255, 255]")
    bins = np.searchsorted(quantize_edges(n), arr, side="right")
    return int(bins) if bins.ndim == 0 else bins


def gradient_map(v: VideoVolume, region: CenterRegion, off: DirectionOffset) -> np.ndarray:
    _check_region(v, region, (abs(off.dx), abs(off.dy), abs(off.dt)))
    data = v.as_float()
    return data[region.slices(off.dx, off.dy, off.dt)] - data[region.slices()]


def hsdg_bin_map(v: VideoVolume, region: CenterRegion, p: HsdgParams) -> np.ndarray:
    return quantize(gradient_map(v, region, p.offset), p.n_quant)


def hsdg_histogram(v: VideoVolume, region: CenterRegion, p: HsdgParams) -> np.ndarray:
    """``n_quant``-bin histogram of quantized gradients; sums to ``region.count``."""
    return np.bincount(hsdg_bin_map(v, region, p).ravel(), minlength=p.n_quant)
