"""Linear Eulerian video magnification.

Each frame is decomposed into a Laplacian pyramid; every pyramid coefficient
is filtered over time with an ideal FFT bandpass, scaled by ``alpha`` and
added back before the pyramid is collapsed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .volume import VideoVolume

_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class EvmParams:
    alpha: float = 10.0
    pyramid_levels: int = 4
    band_low: float = 0.4
    band_high: float = 8.0
    frame_rate: float = 100.0
    amplify_level0: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if not 0 <= self.band_low < self.band_high:
            raise ValueError(f"need 0 <= band_low < band_high, got [{self.band_low}, {self.band_high}]")
        if self.band_high > self.frame_rate / 2:
            raise ValueError(f"band_high {self.band_high} Hz exceeds Nyquist ({self.frame_rate / 2} Hz)")


def _blur(stack: np.ndarray, gain: float = 1.0) -> np.ndarray:
    k = _BINOMIAL * gain
    out = convolve1d(stack, k, axis=1, mode="reflect")
    return convolve1d(out, k, axis=2, mode="reflect")


def pyr_down(stack: np.ndarray) -> np.ndarray:
    return _blur(stack)[:, ::2, ::2]


def pyr_up(stack: np.ndarray, shape) -> np.ndarray:
    up = np.zeros((stack.shape[0],) + tuple(shape), dtype=stack.dtype)
    up[:, ::2, ::2] = stack
    return _blur(up, gain=2.0)


def laplacian_pyramid(stack: np.ndarray, levels: int) -> list[np.ndarray]:
    """Band-pass levels 0..levels-1 (finest first) plus the low-pass residual."""
    bands = []
    g = stack
    for _ in range(levels):
        low = pyr_down(g)
        bands.append(g - pyr_up(low, g.shape[1:]))
        g = low
    bands.append(g)
    return bands


def collapse_pyramid(bands: list[np.ndarray]) -> np.ndarray:
    g = bands[-1]
    for band in reversed(bands[:-1]):
        g = band + pyr_up(g, band.shape[1:])
    return g


def ideal_bandpass(signal: np.ndarray, low: float, high: float, frame_rate: float) -> np.ndarray:
    """Zero every temporal frequency outside [low, high] Hz along axis 0."""
    n = signal.shape[0]
    spec = np.fft.rfft(signal, axis=0)
    freqs = np.fft.rfftfreq(n, d=1.0 / frame_rate)
    keep = (freqs >= low) & (freqs <= high)
    spec[~keep] = 0
    return np.fft.irfft(spec, n=n, axis=0)


def max_levels(width: int, height: int) -> int:
    return int(math.floor(math.log2(min(width, height))))


def magnify(v: VideoVolume, p: EvmParams) -> VideoVolume:
    """Amplify temporal variations in ``[band_low, band_high]`` by ``alpha``.

    Returns a float32 volume of the input's shape, clamped to [0, 255].
    """
    if v.frames < 4:
        raise ValueError(f"magnification needs >= 4 frames, got {v.frames}")
    if p.band_high > p.frame_rate / 2:
        raise ValueError(f"band_high {p.band_high} Hz exceeds Nyquist for {p.frame_rate} fps")
    limit = max_levels(v.width, v.height)
    if p.pyramid_levels > limit:
        raise ValueError(f"pyramid_levels {p.pyramid_levels} too deep for {v.width}x{v.height} (max {limit})")
    bands = laplacian_pyramid(v.as_float(), p.pyramid_levels)
    if p.alpha:
        start = 0 if p.amplify_level0 else 1
        for k in range(start, len(bands)):
            bands[k] = bands[k] + p.alpha * ideal_bandpass(bands[k], p.band_low, p.band_high, p.frame_rate)
    out = collapse_pyramid(bands)
    return VideoVolume(np.clip(out, 0.0, 255.0).astype(np.float32))


def alpha_sweep_schedule(optimal_alpha: float, count: int, step: float = 1.0) -> list[float]:
    """``count`` alphas spaced by ``step`` and centred on ``optimal_alpha``, floored at 1."""
    if count < 1:
        raise ValueError("count must be >= 1")
    mid = (count - 1) / 2
    return [max(1.0, optimal_alpha + step * (k - mid)) for k in range(count)]
