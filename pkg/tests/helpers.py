import numpy as np

from labs.phase_retrieval import block_range, block_values
from labs.sampling_series import sine_wave_crossing_family
from labs.signal_core import TestSignalParams, make_test_signal


def trig_signal(seed: int, band: float = 1.0, degree: int = 4):
    return make_test_signal(TestSignalParams("trig_polynomial", {"degree": degree}, seed, band=band))


def smooth_signal(seed: int, band: float = 0.8, degree: int = 3):
    return make_test_signal(TestSignalParams("random_smooth", {"degree": degree}, seed, band=band))


def anchor_safe_signals(design, N: int, count: int, floor: float = 0.05, start: int = 0, limit: int = 200):
    """Random smooth signals whose block anchors stay above floor times the block peak."""
    n_range = block_range(design, N)
    found = []
    for seed in range(start, start + limit):
        f = smooth_signal(seed, design.signal_band)
        v = block_values(f, design, n_range)
        if np.min(np.abs(v[:, 0]) / np.max(np.abs(v), axis=1)) >= floor:
            found.append(f)
        if len(found) == count:
            break
    return found


def fejer_crossing_family(N: int, amplitude: float = 2.0, g_bound: float = 0.3):
    """Sine-type kernels from A·sin(πz) - g(z) with a Fejér g of band π/2 and sup |g| = g_bound."""
    g = make_test_signal(TestSignalParams("fejer", {"scale": 4.0 * g_bound}, band=0.5))
    return sine_wave_crossing_family(amplitude, g, (-N, N))
