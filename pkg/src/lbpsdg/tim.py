"""Temporal frame-count normalization.

A piecewise-linear resampler over normalized time: output frame ``j`` of
``M`` sits at input position ``j * (T - 1) / (M - 1)`` and blends the two
bracketing input frames. Endpoints map exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import VideoVolume


@dataclass(frozen=True)
class TimParams:
    target_frames: int = 10

    def __post_init__(self):
        if int(self.target_frames) < 2:
            raise ValueError(f"target_frames must be >= 2, got {self.target_frames}")


def normalize_length(v: VideoVolume, p: TimParams) -> VideoVolume:
    """Resample ``v`` to ``p.target_frames`` frames.

    uint8 input is rounded half-up back to uint8; float input stays float.
    """
    n_in, n_out = v.frames, int(p.target_frames)
    if n_in < 2:
        raise ValueError("temporal normalization needs at least 2 input frames")
    if n_in == n_out:
        return v
    src = v.data.astype(np.float64)
    out = np.empty((n_out,) + src.shape[1:], dtype=np.float64)
    span = n_out - 1
    for j in range(n_out):
        # exact rational position j*(n_in-1)/span
        num = j * (n_in - 1)
        i0, rem = divmod(num, span)
        if rem == 0:
            out[j] = src[i0]
        else:
            w = rem / span
            out[j] = (1.0 - w) * src[i0] + w * src[i0 + 1]
    if v.data.dtype == np.uint8:
        return VideoVolume(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))
    return VideoVolume(out)
