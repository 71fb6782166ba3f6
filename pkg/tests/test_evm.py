import numpy as np
import pytest

from lbpsdg.evm import (EvmParams, alpha_sweep_schedule, collapse_pyramid, laplacian_pyramid,
                        magnify)
from lbpsdg.volume import VideoVolume, synth_motion_volume

from .oracles import profile_shift

W, H, T = 128, 32, 64
CYCLES = 4  # temporal cycles across the clip, 1.875 Hz at 30 fps


def sinusoid_translation(delta, w=W, h=H, t=T):
    """Periodic 1-D texture shifted by delta*sin(2*pi*CYCLES*k/T) pixels in frame k."""
    x = np.arange(w)
    disp = delta * np.sin(2 * np.pi * CYCLES * np.arange(t) / t)

    def tex(s):
        return 128 + 40 * np.cos(2 * np.pi * 2 * (x - s) / w) + 25 * np.cos(2 * np.pi * 3 * (x - s) / w + 1.0)

    return VideoVolume(np.stack([np.tile(tex(d), (h, 1)) for d in disp]).astype(np.float32))


def measured_amplitude(v):
    prof = v.data.astype(np.float64).mean(axis=1)
    ref = prof.mean(axis=0)
    shifts = np.array([profile_shift(p, ref) for p in prof])
    k = np.arange(len(shifts))
    basis = np.column_stack([np.sin(2 * np.pi * CYCLES * k / len(k)), np.cos(2 * np.pi * CYCLES * k / len(k))])
    coef = np.linalg.lstsq(basis, shifts, rcond=None)[0]
    return float(np.hypot(*coef))


def test_pyramid_round_trip_exact():
    stack = np.random.default_rng(0).uniform(0, 255, (3, 37, 50))
    bands = laplacian_pyramid(stack, 4)
    assert len(bands) == 5
    assert np.abs(collapse_pyramid(bands) - stack).max() < 1e-9


def test_alpha_zero_reconstructs():
    v = synth_motion_volume("translate_right", (48, 40, 12), 3, speed=0.5)
    out = magnify(v, EvmParams(alpha=0))
    assert out.shape == v.shape
    assert np.abs(out.data - v.as_float()).max() <= 2


@pytest.mark.parametrize("alpha", [1, 10, 50])
def test_static_volume_unchanged(alpha):
    v = synth_motion_volume("static", (40, 40, 10), 5)
    out = magnify(v, EvmParams(alpha=alpha))
    assert np.abs(out.data - v.as_float()).max() <= 1


def test_oracle_measures_input_displacement():
    assert measured_amplitude(sinusoid_translation(0.2)) == pytest.approx(0.2, rel=0.1)


@pytest.mark.parametrize("alpha", [5, 10])
def test_subpixel_motion_magnified(alpha):
    delta = 0.2
    out = magnify(sinusoid_translation(delta), EvmParams(alpha=alpha, frame_rate=30.0))
    assert measured_amplitude(out) / delta == pytest.approx(1 + alpha, rel=0.25)


def test_energy_monotone_in_alpha():
    v = synth_motion_volume("translate_up", (48, 48, 16), 11, speed=0.3, cutoff=0.06)
    energies = []
    for a in (0, 5, 10, 20):
        out = magnify(v, EvmParams(alpha=a, frame_rate=30.0)).data.astype(np.float64)
        energies.append(np.abs(np.diff(out, axis=0)).mean())
    assert energies == sorted(energies)


def test_deterministic():
    v = synth_motion_volume("translate_left", (32, 32, 8), 2, speed=0.4)
    p = EvmParams(alpha=12)
    assert magnify(v, p).data.tobytes() == magnify(v, p).data.tobytes()


def test_output_clamped():
    v = synth_motion_volume("translate_up", (32, 32, 12), 9, speed=2.5)
    out = magnify(v, EvmParams(alpha=200, frame_rate=30))
    assert out.data.min() >= 0 and out.data.max() <= 255


def test_errors():
    v = synth_motion_volume("static", (16, 16, 3), 0)
    with pytest.raises(ValueError, match="4 frames"):
        magnify(v, EvmParams())
    with pytest.raises(ValueError, match="Nyquist"):
        EvmParams(band_high=60, frame_rate=100)
    with pytest.raises(ValueError, match="too deep"):
        magnify(synth_motion_volume("static", (8, 8, 6), 0), EvmParams(pyramid_levels=4))
    with pytest.raises(ValueError):
        EvmParams(alpha=-1)


def test_alpha_schedules():
    assert alpha_sweep_schedule(10, 5) == [8, 9, 10, 11, 12]
    assert alpha_sweep_schedule(23, 5, step=3) == [17, 20, 23, 26, 29]
    assert alpha_sweep_schedule(7, 1) == [7]
    assert alpha_sweep_schedule(2, 5) == [1, 1, 2, 3, 4]
