"""Grayscale video volumes, frame-directory loading and dataset manifests.

Volumes are stored as ``data[t, y, x]`` arrays. The Y axis grows downward
(image-row convention), so "up" in image space means decreasing ``y``.
"""
from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

FRAME_SUFFIXES = (".pgm", ".png")
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
CACHE_MAGIC = b"MXV1"
SNAP_EPS = 1e-6


class VolumeError(ValueError):
    """Raised for unreadable, empty or inconsistent video data."""


class ManifestError(ValueError):
    """Raised for malformed dataset manifests."""


@dataclass(frozen=True, eq=False)
class VideoVolume:
    """Immutable grayscale video, indexed as ``data[t, y, x]``.

    ``data`` is uint8 for loaded footage and float32 after magnification.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise VolumeError(f"volume must be a non-empty 3-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            arr = arr.astype(np.float32)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        """(width, height, frames)"""
        return self.width, self.height, self.frames

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)

    def to_uint8(self) -> "VideoVolume":
        if self.data.dtype == np.uint8:
            return self
        return VideoVolume(np.clip(np.floor(self.data.astype(np.float64) + 0.5), 0, 255).astype(np.uint8))

    def __repr__(self):
        return f"VideoVolume(width={self.width}, height={self.height}, frames={self.frames}, dtype={self.data.dtype})"


def _snap(c: float) -> float:
    r = round(c)
    return float(r) if abs(c - r) < SNAP_EPS else c


def lerp(a, b, f):
    # a + f*(b - a) keeps a == b exact, which matters for LBP ties
    return a + f * (b - a)


def sample(v: VideoVolume, x: float, y: float, t: float) -> float:
    """Interpolated intensity at a possibly fractional point.

    Interpolation is linear along each axis with a fractional coordinate,
    applied in x, y, t order; integral coordinates index directly.
    """
    x, y, t = _snap(x), _snap(y), _snap(t)
    assert 0 <= x <= v.width - 1, f"x={x} outside [0, {v.width - 1}]"
    assert 0 <= y <= v.height - 1, f"y={y} outside [0, {v.height - 1}]"
    assert 0 <= t <= v.frames - 1, f"t={t} outside [0, {v.frames - 1}]"
    x0, y0, t0 = int(math.floor(x)), int(math.floor(y)), int(math.floor(t))
    fx, fy, ft = x - x0, y - y0, t - t0
    d = v.data

    def plane(tt):
        def row(yy):
            a = float(d[tt, yy, x0])
            return lerp(a, float(d[tt, yy, x0 + 1]), fx) if fx else a

        r = row(y0)
        return lerp(r, row(y0 + 1), fy) if fy else r

    p = plane(t0)
    return lerp(p, plane(t0 + 1), ft) if ft else p


def pixel(v: VideoVolume, x: float, y: float, t: int) -> float:
    """Intensity at (x, y) of frame ``t``, bilinear for fractional x/y."""
    assert float(t).is_integer(), "frame index must be integral"
    return sample(v, x, y, t)


def _read_frame(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode == "L":
                return np.asarray(img, dtype=np.uint8).copy()
            if img.mode.startswith("I") or img.mode == "F":
                # 16-bit grayscale PGM/PNG
                arr = np.asarray(img, dtype=np.float64) / 257.0
                return np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except OSError as exc:
        raise VolumeError(f"cannot read frame {path}: {exc}") from exc
    return np.clip(np.floor(rgb @ LUMA_WEIGHTS + 0.5), 0, 255).astype(np.uint8)


def list_frames(frame_dir) -> list[Path]:
    frame_dir = Path(frame_dir)
    if not frame_dir.is_dir():
        raise VolumeError(f"frame directory not found: {frame_dir}")
    return sorted(p for p in frame_dir.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def resize_frame(frame: np.ndarray, size) -> np.ndarray:
    w, h = size
    if frame.shape == (h, w):
        return frame
    return np.asarray(Image.fromarray(frame).resize((w, h), Image.BILINEAR), dtype=np.uint8)


def load_volume(frame_dir, target_size=None) -> VideoVolume:
    """Load a directory of PGM/PNG frames, sorted by filename, as a volume.

    Color frames are converted with BT.601 luma weights. ``target_size`` is
    ``(width, height)``; frames are resized bilinearly when given.
    """
    if target_size is not None:
        w, h = target_size
        if int(w) < 1 or int(h) < 1:
            raise VolumeError(f"target size must be positive, got {target_size}")
    paths = list_frames(frame_dir)
    if not paths:
        raise VolumeError(f"no PGM/PNG frames in {frame_dir}")
    frames = [_read_frame(p) for p in paths]
    shape = frames[0].shape
    for p, f in zip(paths, frames):
        if f.shape != shape:
            raise VolumeError(f"frame {p.name} has size {f.shape[::-1]}, expected {shape[::-1]}")
    if target_size is not None:
        frames = [resize_frame(f, (int(target_size[0]), int(target_size[1]))) for f in frames]
    return VideoVolume(np.stack(frames))


def resize_volume(v: VideoVolume, size) -> VideoVolume:
    u8 = v.to_uint8()
    return VideoVolume(np.stack([resize_frame(f, size) for f in u8.data]))


def save_frames(v: VideoVolume, frame_dir, fmt: str = "pgm") -> list[Path]:
    """Write each frame as ``frame_0000.<fmt>``; float data is clamped and rounded."""
    frame_dir = Path(frame_dir)
    frame_dir.mkdir(parents=True, exist_ok=True)
    out = []
    for i, f in enumerate(v.to_uint8().data):
        p = frame_dir / f"frame_{i:04d}.{fmt}"
        Image.fromarray(f).save(p)
        out.append(p)
    return out


# -- cache files ---------------------------------------------------------------

def write_cache(v: VideoVolume, path) -> None:
    """Write ``MXV1`` + u32 width/height/frames + dtype flag + row-major pixels.

    The flag byte is 0 for u8 data and 1 for f32 data (values clamped to
    [0, 255]). The write is atomic.
    """
    path = Path(path)
    if v.data.dtype == np.uint8:
        flag, payload = 0, v.data.tobytes()
    else:
        flag, payload = 1, np.clip(v.data, 0, 255).astype("<f4").tobytes()
    header = CACHE_MAGIC + struct.pack("<IIIB", v.width, v.height, v.frames, flag)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(header + payload)
    os.replace(tmp, path)


def read_cache(path) -> VideoVolume:
    raw = Path(path).read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise VolumeError(f"{path}: not a volume cache file")
    w, h, t, flag = struct.unpack_from("<IIIB", raw, 4)
    body = raw[17:]
    if flag == 0:
        arr = np.frombuffer(body, dtype=np.uint8)
    elif flag == 1:
        arr = np.frombuffer(body, dtype="<f4").astype(np.float32)
    else:
        raise VolumeError(f"{path}: unknown dtype flag {flag}")
    if arr.size != w * h * t:
        raise VolumeError(f"{path}: expected {w * h * t} pixels, found {arr.size}")
    return VideoVolume(arr.reshape(t, h, w))


# -- manifests -------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    video_path: str
    subject_id: str
    label: str
    frame_rate: float | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    root: str = "."

    @property
    def subjects(self) -> list[str]:
        return list(dict.fromkeys(e.subject_id for e in self.entries))

    @property
    def labels(self) -> list[str]:
        return sorted({e.label for e in self.entries})

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.video_path)
        return p if p.is_absolute() else Path(self.root) / p

    def __len__(self):
        return len(self.entries)


def _entry_line(text: str, k: int) -> int:
    # 1-based line of the k-th top-level object in a JSON array, for messages
    depth, count = 0, -1
    line = 1
    in_str = esc = False
    for ch in text:
        if ch == "\n":
            line += 1
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch in "[{":
            depth += 1
            if ch == "{" and depth == 2:
                count += 1
                if count == k:
                    return line
        elif ch in "]}":
            depth -= 1
    return line


def parse_manifest(text: str, root=".", check_paths: bool = False) -> DatasetManifest:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise ManifestError("manifest must be a JSON array of entries")
    entries, seen = [], set()
    for k, item in enumerate(raw):
        where = f"entry {k} (line {_entry_line(text, k)})"
        if not isinstance(item, dict):
            raise ManifestError(f"{where}: expected an object")
        for key in ("video_path", "subject_id", "label"):
            if key not in item:
                raise ManifestError(f"missing field '{key}' at {where}")
        label = str(item["label"]).strip()
        if not label:
            raise ManifestError(f"empty label at entry {k}")
        subject = str(item["subject_id"])
        if not subject:
            raise ManifestError(f"empty subject_id at entry {k}")
        path = str(item["video_path"])
        if path in seen:
            raise ManifestError(f"duplicate video_path '{path}' at {where}")
        seen.add(path)
        fr = item.get("frame_rate")
        if fr is not None:
            fr = float(fr)
            if not fr > 0:
                raise ManifestError(f"frame_rate must be positive at {where}")
        entries.append(ManifestEntry(path, subject, label, fr))
    m = DatasetManifest(tuple(entries), str(root))
    if check_paths:
        for e in m.entries:
            if not m.resolve(e).is_dir():
                raise ManifestError(f"video_path does not resolve to a directory: {e.video_path}")
    return m


def load_manifest(path, check_paths: bool = False) -> DatasetManifest:
    """Parse a UTF-8 JSON manifest; relative paths resolve against its directory."""
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), root=str(path.parent), check_paths=check_paths)


def dump_manifest(m: DatasetManifest) -> str:
    rows = []
    for e in m.entries:
        row = {"video_path": e.video_path, "subject_id": e.subject_id, "label": e.label}
        if e.frame_rate is not None:
            row["frame_rate"] = e.frame_rate
        rows.append(row)
    return json.dumps(rows, indent=2) + "\n"


# -- synthetic data ----------------------------------------------------------------

MOTION_KINDS = ("translate_up", "translate_down", "translate_left", "translate_right", "static")


def synth_texture(width: int, height: int, seed: int, cutoff: float = 0.12,
                  low: float = 30.0, high: float = 225.0) -> np.ndarray:
    """Periodic band-limited noise texture scaled to [low, high] (float64).

    ``cutoff`` is the highest kept spatial frequency in cycles/pixel.
    """
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width))
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    mask = np.hypot(fx, fy) <= cutoff
    tex = np.real(np.fft.ifft2(np.fft.fft2(noise) * mask))
    tex -= tex.min()
    span = tex.max()
    tex = tex / span if span > 0 else tex
    return low + (high - low) * tex


def fourier_shift(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Circularly shift a periodic image by a possibly fractional (dx, dy)."""
    h, w = img.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    phase = np.exp(-2j * np.pi * (fx * dx + fy * dy))
    return np.real(np.fft.ifft2(np.fft.fft2(img) * phase))


_DIRECTION = {
    "translate_up": (0, -1),
    "translate_down": (0, 1),
    "translate_left": (-1, 0),
    "translate_right": (1, 0),
    "static": (0, 0),
}


def synth_motion_volume(kind: str, size, texture_seed: int, speed: float = 1.0,
                        cutoff: float = 0.12) -> VideoVolume:
    """Rigidly translating periodic texture with wraparound.

    ``size`` is (width, height, frames); content moves ``speed`` pixels per
    frame in the named direction (up = towards row 0). Integer displacements
    are exact rolls of frame 0, fractional ones use a Fourier shift.
    """
    if kind not in _DIRECTION:
        raise ValueError(f"unknown motion kind {kind!r}; expected one of {MOTION_KINDS}")
    w, h, t = (int(s) for s in size)
    if min(w, h, t) < 1:
        raise ValueError(f"size must be positive, got {size}")
    if speed < 0:
        raise ValueError("speed must be non-negative")
    tex = synth_texture(w, h, texture_seed, cutoff)
    base = np.clip(np.floor(tex + 0.5), 0, 255).astype(np.uint8)
    ux, uy = _DIRECTION[kind]
    frames = []
    for k in range(t):
        dx, dy = ux * speed * k, uy * speed * k
        if float(dx).is_integer() and float(dy).is_integer():
            frames.append(np.roll(base, (int(dy), int(dx)), axis=(0, 1)))
        else:
            shifted = fourier_shift(tex, dx, dy)
            frames.append(np.clip(np.floor(shifted + 0.5), 0, 255).astype(np.uint8))
    return VideoVolume(np.stack(frames))
