"""Block partitioning and concatenated LBP-TOP / HSDG / LBP-SDG feature vectors."""
from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .hsdg import HsdgParams, hsdg_bin_map
from .lbp import (PLANES, SIP_SPATIAL_BINS, SIP_TEMPORAL_BINS, CenterRegion, LbpTopParams,
                  center_region, lbp_sip_code_maps, lbp_top_code_maps)
from .volume import VideoVolume

DESCRIPTORS = ("lbp_top", "hsdg", "lbp_sdg", "lbp_sip", "sip_sdg")
NORMALIZATIONS = ("none", "per_block_l1")
_PARTS = {
    "lbp_top": ("lbp_top",),
    "hsdg": ("hsdg",),
    "lbp_sdg": ("lbp_top", "hsdg"),
    "lbp_sip": ("lbp_sip",),
    "sip_sdg": ("lbp_sip", "hsdg"),
}


@dataclass(frozen=True)
class BlockGrid:
    bx: int = 1
    by: int = 1
    bt: int = 1

    def __post_init__(self):
        if min(self.bx, self.by, self.bt) < 1:
            raise ValueError(f"block counts must be >= 1, got {(self.bx, self.by, self.bt)}")

    @property
    def count(self) -> int:
        return self.bx * self.by * self.bt


@dataclass(frozen=True)
class PipelineConfig:
    grid: BlockGrid = field(default_factory=BlockGrid)
    lbp: LbpTopParams = field(default_factory=LbpTopParams)
    hsdg: HsdgParams | None = None
    descriptor: str = "lbp_top"
    normalize: str = "none"

    def __post_init__(self):
        if self.descriptor not in DESCRIPTORS:
            raise ValueError(f"unknown descriptor {self.descriptor!r}; expected one of {DESCRIPTORS}")
        if self.normalize not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalize!r}")
        if "hsdg" in _PARTS[self.descriptor] and self.hsdg is None:
            raise ValueError(f"descriptor {self.descriptor!r} needs hsdg parameters")

    @property
    def parts(self):
        return _PARTS[self.descriptor]

    @property
    def margins(self):
        """Shared center-region margins of every configured descriptor."""
        mx, my, mt = self.lbp.r_xv, self.lbp.r_yv, self.lbp.r_tv
        if self.hsdg is not None:
            mx, my, mt = max(mx, self.hsdg.r_x), max(my, self.hsdg.r_y), max(mt, self.hsdg.r_t)
        return mx, my, mt

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        hs = d.get("hsdg")
        return cls(
            grid=BlockGrid(**d.get("grid", {})),
            lbp=LbpTopParams(**d.get("lbp", {})),
            hsdg=HsdgParams(**hs) if hs is not None else None,
            descriptor=d.get("descriptor", "lbp_top"),
            normalize=d.get("normalize", "none"),
        )


class Block(NamedTuple):
    index: int
    cell: tuple
    region: CenterRegion


class LayoutEntry(NamedTuple):
    block: int
    descriptor: str
    plane: str
    start: int
    stop: int


def _split_range(lo: int, hi: int, k: int):
    n = hi - lo + 1
    base, extra = divmod(n, k)
    out, start = [], lo
    for i in range(k):
        size = base + (1 if i < extra else 0)
        out.append((start, start + size - 1))
        start += size
    return out


def partition(v: VideoVolume, grid: BlockGrid, margins=(1, 1, 1)) -> list[Block]:
    """Split the valid-center lattice into ``bx*by*bt`` contiguous blocks.

    Blocks are ordered x-fastest, then y, then t; leading blocks take the
    remainder when an extent does not divide evenly.
    """
    full = center_region(v, margins)
    nx, ny, nt = full.extent
    for axis, n, k in (("x", nx, grid.bx), ("y", ny, grid.by), ("t", nt, grid.bt)):
        if n < k:
            raise ValueError(f"{k} blocks along {axis} but only {n} valid centers "
                             f"(volume {v.shape}, margins {tuple(margins)})")
    xs = _split_range(*full.x_range, grid.bx)
    ys = _split_range(*full.y_range, grid.by)
    ts = _split_range(*full.t_range, grid.bt)
    blocks = []
    for it, tr in enumerate(ts):
        for iy, yr in enumerate(ys):
            for ix, xr in enumerate(xs):
                blocks.append(Block(len(blocks), (ix, iy, it), CenterRegion(xr, yr, tr)))
    return blocks


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        covered = 0
        for e in self.layout:
            if e.start != covered or e.stop < e.start:
                raise ValueError("layout must cover the vector contiguously")
            covered = e.stop
        if covered != len(self.values):
            raise ValueError(f"layout covers {covered} values, vector has {len(self.values)}")

    @property
    def dim(self) -> int:
        return len(self.values)

    def pieces(self):
        for e in self.layout:
            yield e, self.values[e.start:e.stop]

    def layout_json(self) -> list:
        return [e._asdict() for e in self.layout]


def part_bins(part: str, cfg: PipelineConfig) -> list[tuple]:
    """(plane tag, bins) of one descriptor part within a block."""
    if part == "lbp_top":
        return [(pl, cfg.lbp.plane_bins(pl)) for pl in PLANES]
    if part == "hsdg":
        return [(f"d{cfg.hsdg.direction}", cfg.hsdg.n_quant)]
    if part == "lbp_sip":
        return [("sip_xy", SIP_SPATIAL_BINS), ("sip_t", SIP_TEMPORAL_BINS)]
    raise ValueError(part)


def feature_dimension(cfg: PipelineConfig) -> int:
    """Closed-form vector length: blocks times per-block bins, summed over parts."""
    return cfg.grid.count * sum(b for part in cfg.parts for _, b in part_bins(part, cfg))


def _part_maps(v: VideoVolume, region: CenterRegion, part: str, cfg: PipelineConfig) -> dict:
    if part == "lbp_top":
        return lbp_top_code_maps(v, region, cfg.lbp)
    if part == "hsdg":
        return {f"d{cfg.hsdg.direction}": hsdg_bin_map(v, region, cfg.hsdg)}
    return lbp_sip_code_maps(v, region, (cfg.lbp.r_xv, cfg.lbp.r_yv, cfg.lbp.r_tv))


def extract(v: VideoVolume, cfg: PipelineConfig) -> FeatureVector:
    """Per-block histograms concatenated part by part.

    For composite descriptors all blocks of the first part come before all
    blocks of the second, so the LBP-TOP prefix of LBP-SDG equals plain
    LBP-TOP under the same margins.
    """
    margins = cfg.margins
    blocks = partition(v, cfg.grid, margins)
    full = center_region(v, margins)
    (fx0, _), (fy0, _), (ft0, _) = full.x_range, full.y_range, full.t_range
    values, layout = [], []
    pos = 0
    for part in cfg.parts:
        maps = _part_maps(v, full, part, cfg)
        bins = part_bins(part, cfg)
        for b in blocks:
            r = b.region
            sl = (slice(r.t_range[0] - ft0, r.t_range[1] - ft0 + 1),
                  slice(r.y_range[0] - fy0, r.y_range[1] - fy0 + 1),
                  slice(r.x_range[0] - fx0, r.x_range[1] - fx0 + 1))
            for plane, nb in bins:
                hist = np.bincount(maps[plane][sl].ravel(), minlength=nb).astype(np.float64)
                values.append(hist)
                layout.append(LayoutEntry(b.index, part, plane, pos, pos + nb))
                pos += nb
    fv = FeatureVector(np.concatenate(values), tuple(layout))
    return normalize_per_block_l1(fv) if cfg.normalize == "per_block_l1" else fv


def normalize_per_block_l1(f: FeatureVector) -> FeatureVector:
    """Scale every (block, descriptor, plane) sub-histogram to unit sum; zero ones stay zero."""
    out = f.values.astype(np.float64).copy()
    for e in f.layout:
        s = out[e.start:e.stop].sum()
        if s > 0:
            out[e.start:e.stop] /= s
    return FeatureVector(out, f.layout)


# -- feature files ---------------------------------------------------------------

FEATURE_MAGIC = b"MXF1"


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _unpack_str(buf: bytes, pos: int):
    (n,) = struct.unpack_from("<H", buf, pos)
    pos += 2
    return buf[pos:pos + n].decode("utf-8"), pos + n


def write_feature_file(path, records, layout) -> None:
    """Write feature records plus a ``<path>.layout.json`` sidecar.

    Each record is ``(manifest index, subject, label, descriptor, config hash,
    vector)``. Binary layout: ``MXF1``, u32 record count, u32 dim, then per
    record a u32 index, four u16-length-prefixed UTF-8 strings and ``dim``
    little-endian f32 values.
    """
    path = Path(path)
    records = list(records)
    dim = len(records[0][5]) if records else 0
    chunks = [FEATURE_MAGIC, struct.pack("<II", len(records), dim)]
    for index, subject, label, descriptor, chash, vec in records:
        vec = np.asarray(vec)
        if vec.shape != (dim,):
            raise ValueError("all feature vectors in a file must share one dimension")
        chunks.append(struct.pack("<I", index))
        for s in (subject, label, descriptor, chash):
            chunks.append(_pack_str(str(s)))
        chunks.append(vec.astype("<f4").tobytes())
    _atomic_write(path, b"".join(chunks))
    sidecar = {"dim": dim, "layout": [e._asdict() if hasattr(e, "_asdict") else e for e in layout]}
    _atomic_write(Path(str(path) + ".layout.json"), (json.dumps(sidecar, indent=1) + "\n").encode())


def read_feature_file(path):
    """Return ``(records, layout)`` as written by :func:`write_feature_file`."""
    buf = Path(path).read_bytes()
    if buf[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: not a feature file")
    count, dim = struct.unpack_from("<II", buf, 4)
    pos = 12
    records = []
    for _ in range(count):
        (index,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        strs = []
        for _ in range(4):
            s, pos = _unpack_str(buf, pos)
            strs.append(s)
        vec = np.frombuffer(buf, dtype="<f4", count=dim, offset=pos).astype(np.float64)
        pos += 4 * dim
        records.append((index, *strs, vec))
    side = json.loads(Path(str(path) + ".layout.json").read_text())
    layout = tuple(LayoutEntry(**e) for e in side["layout"])
    return records, layout


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)
