"""LBP, LBP-TOP and LBP-SIP histograms over a region of center points.

Neighbor positions follow ``(x + rx*sin(2*pi*i/n), y + ry*cos(2*pi*i/n))``
on each plane, with the plane sign patterns

    XY: (+r_xv, -r_yv)    XT: (+r_xv, +r_tv)    YT: (-r_yv, +r_tv)

Fractional neighbors are interpolated linearly per axis (see
:func:`lbpsdg.volume.sample`). A neighbor counts as "greater or equal" when
``g(D_i) - g(P) >= -TIE_EPS``; the tolerance absorbs float round-off in the
interpolation so that exact ties stay ties.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .volume import SNAP_EPS, VideoVolume, lerp, sample

TIE_EPS = 1e-9
PLANES = ("xy", "xt", "yt")


@dataclass(frozen=True)
class LbpTopParams:
    r_xv: int = 1
    r_yv: int = 1
    r_tv: int = 1
    n_xy: int = 8
    n_xt: int = 8
    n_yt: int = 8
    uniform: bool = False

    def __post_init__(self):
        if min(self.r_xv, self.r_yv, self.r_tv) < 1:
            raise ValueError("LBP-TOP radii must be >= 1")
        if min(self.n_xy, self.n_xt, self.n_yt) < 2:
            raise ValueError("LBP-TOP neighbor counts must be >= 2")
        if max(self.n_xy, self.n_xt, self.n_yt) > 24:
            raise ValueError("neighbor counts above 24 are not supported")

    def plane_bins(self, plane: str) -> int:
        n = {"xy": self.n_xy, "xt": self.n_xt, "yt": self.n_yt}[plane]
        return n * (n - 1) + 3 if self.uniform else 2 ** n

    @property
    def bins(self) -> int:
        return sum(self.plane_bins(p) for p in PLANES)


@dataclass(frozen=True)
class CenterRegion:
    """Inclusive index intervals of permissible center points."""

    x_range: tuple
    y_range: tuple
    t_range: tuple

    @property
    def extent(self):
        """(nx, ny, nt), zero where an interval is empty."""
        return tuple(max(0, hi - lo + 1) for lo, hi in (self.x_range, self.y_range, self.t_range))

    @property
    def count(self) -> int:
        nx, ny, nt = self.extent
        return nx * ny * nt

    @property
    def empty(self) -> bool:
        return self.count == 0

    def slices(self, ox: int = 0, oy: int = 0, ot: int = 0):
        """Array slices ``[t, y, x]`` of the region shifted by an integer offset."""
        (x0, x1), (y0, y1), (t0, t1) = self.x_range, self.y_range, self.t_range
        return (slice(t0 + ot, t1 + ot + 1), slice(y0 + oy, y1 + oy + 1), slice(x0 + ox, x1 + ox + 1))

    def points(self):
        for t in range(self.t_range[0], self.t_range[1] + 1):
            for y in range(self.y_range[0], self.y_range[1] + 1):
                for x in range(self.x_range[0], self.x_range[1] + 1):
                    yield x, y, t


def center_region(v: VideoVolume, margins) -> CenterRegion:
    """Region excluding ``(mx, my, mt)`` border pixels/frames on each side."""
    mx, my, mt = margins
    return CenterRegion((mx, v.width - 1 - mx), (my, v.height - 1 - my), (mt, v.frames - 1 - mt))


def neighbor_coords(x, y, rx, ry, n, i):
    """Coordinates of the ``i``-th of ``n`` points on an ellipse of radii (rx, ry)."""
    a = 2.0 * math.pi * i / n
    return x + rx * math.sin(a), y + ry * math.cos(a)


def plane_offsets(plane: str, p: LbpTopParams) -> list[tuple]:
    """(dx, dy, dt) neighbor offsets of one plane, in bit order."""
    out = []
    if plane == "xy":
        for i in range(p.n_xy):
            dx, dy = neighbor_coords(0.0, 0.0, p.r_xv, -p.r_yv, p.n_xy, i)
            out.append((dx, dy, 0.0))
    elif plane == "xt":
        for i in range(p.n_xt):
            dx, dt = neighbor_coords(0.0, 0.0, p.r_xv, p.r_tv, p.n_xt, i)
            out.append((dx, 0.0, dt))
    elif plane == "yt":
        for i in range(p.n_yt):
            dy, dt = neighbor_coords(0.0, 0.0, -p.r_yv, p.r_tv, p.n_yt, i)
            out.append((0.0, dy, dt))
    else:
        raise ValueError(f"unknown plane {plane!r}")
    return out


def lbp_code(v: VideoVolume, center, neighbors) -> int:
    """LBP code of ``center`` against an ordered list of (x, y, t) neighbor points."""
    x, y, t = center
    gc = sample(v, x, y, t)
    code = 0
    for i, (nx, ny, nt) in enumerate(neighbors):
        if sample(v, nx, ny, nt) - gc >= -TIE_EPS:
            code |= 1 << i
    return code


def _transitions(code: int, p: int) -> int:
    rotated = ((code >> 1) | ((code & 1) << (p - 1))) & ((1 << p) - 1)
    return bin(code ^ rotated).count("1")


@lru_cache(maxsize=None)
def uniform_table(p: int) -> np.ndarray:
    """Lookup table code -> uniform bin; non-uniform codes share the last bin."""
    table = np.empty(2 ** p, dtype=np.int64)
    nxt = 0
    overflow = p * (p - 1) + 2
    for code in range(2 ** p):
        if _transitions(code, p) <= 2:
            table[code] = nxt
            nxt += 1
        else:
            table[code] = overflow
    assert nxt == overflow
    table.setflags(write=False)
    return table


def uniform_map(code: int, p: int) -> int:
    return int(uniform_table(p)[code])


def _split(c: float):
    r = round(c)
    if abs(c - r) < SNAP_EPS:
        return int(r), 0.0
    i = math.floor(c)
    return i, c - i


def shifted_samples(data: np.ndarray, region: CenterRegion, offset) -> np.ndarray:
    """Interpolated samples at ``center + offset`` for every center in ``region``."""
    (ix, fx), (iy, fy), (it, ft) = (_split(c) for c in offset)

    def at(ox, oy, ot):
        return data[region.slices(ox, oy, ot)]

    def plane(ot):
        def row(oy):
            a = at(ix, oy, ot)
            return lerp(a, at(ix + 1, oy, ot), fx) if fx else a

        r = row(iy)
        return lerp(r, row(iy + 1), fy) if fy else r

    pl = plane(it)
    return lerp(pl, plane(it + 1), ft) if ft else pl


def _check_region(v: VideoVolume, region: CenterRegion, reach):
    if region.empty:
        raise ValueError("empty center region; the volume is too small for these radii")
    rx, ry, rt = reach
    (x0, x1), (y0, y1), (t0, t1) = region.x_range, region.y_range, region.t_range
    if x0 - rx < 0 or y0 - ry < 0 or t0 - rt < 0 or x1 + rx > v.width - 1 \
            or y1 + ry > v.height - 1 or t1 + rt > v.frames - 1:
        raise ValueError(f"center region {region} lets neighbors leave the volume {v.shape}")


def code_map(data: np.ndarray, region: CenterRegion, offsets) -> np.ndarray:
    center = data[region.slices()]
    codes = np.zeros(center.shape, dtype=np.int64)
    for i, off in enumerate(offsets):
        codes |= ((shifted_samples(data, region, off) - center) >= -TIE_EPS).astype(np.int64) << i
    return codes


def lbp_top_code_maps(v: VideoVolume, region: CenterRegion, p: LbpTopParams) -> dict:
    """Per-plane bin maps over the region (uniform-mapped when ``p.uniform``)."""
    _check_region(v, region, (p.r_xv, p.r_yv, p.r_tv))
    data = v.as_float()
    maps = {}
    for plane in PLANES:
        offsets = plane_offsets(plane, p)
        codes = code_map(data, region, offsets)
        maps[plane] = uniform_table(len(offsets))[codes] if p.uniform else codes
    return maps


def lbp_top_histograms(v: VideoVolume, region: CenterRegion, p: LbpTopParams) -> dict:
    """XY, XT and YT histograms; each sums to ``region.count``."""
    maps = lbp_top_code_maps(v, region, p)
    return {pl: np.bincount(maps[pl].ravel(), minlength=p.plane_bins(pl)) for pl in PLANES}


SIP_SPATIAL_BINS = 16
SIP_TEMPORAL_BINS = 4


def sip_offsets(radii):
    """Spatial (4-bit) and temporal (2-bit) neighbor offsets of LBP-SIP."""
    r_x, r_y, r_t = radii
    spatial = []
    for i in range(4):
        dx, dy = neighbor_coords(0, 0, r_x, -r_y, 4, i)
        spatial.append((int(round(dx)), int(round(dy)), 0))
    temporal = [(0, 0, r_t), (0, 0, -r_t)]
    return spatial, temporal


def lbp_sip_code_maps(v: VideoVolume, region: CenterRegion, radii) -> dict:
    _check_region(v, region, radii)
    data = v.as_float()
    spatial, temporal = sip_offsets(radii)
    return {"sip_xy": code_map(data, region, spatial), "sip_t": code_map(data, region, temporal)}


def lbp_sip_histogram(v: VideoVolume, region: CenterRegion, radii) -> np.ndarray:
    """16 spatial-pattern bins followed by 4 temporal-pattern bins."""
    maps = lbp_sip_code_maps(v, region, radii)
    return np.concatenate([
        np.bincount(maps["sip_xy"].ravel(), minlength=SIP_SPATIAL_BINS),
        np.bincount(maps["sip_t"].ravel(), minlength=SIP_TEMPORAL_BINS),
    ])
