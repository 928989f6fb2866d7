import numpy as np
import pytest

from labs.divergence_lab import (
    NormCurve,
    edge_error,
    error_profile,
    fit_log_growth,
    oscillation_probe,
    sampling_norm_curve,
    shannon_kernel_sup,
    shannon_norm_curve,
    shannon_norm_estimate,
    walsh_norm_table,
    walsh_projection_norm,
    walsh_projection_norm_mc,
)
from labs.signal_core import TestSignalParams, make_test_signal, reproducing_kernel
from services.error_handler import GridTooCoarse, InvalidParams, NonFiniteResult
from tests.helpers import fejer_crossing_family, smooth_signal


def test_norm_of_zeroth_partial_sum_is_one():
    assert shannon_norm_estimate(0) == pytest.approx(1.0, abs=1e-12)


def test_norm_grows_with_N():
    values = [shannon_norm_estimate(N) for N in (0, 4, 8, 16, 32)]
    assert all(b > a for a, b in zip(values, values[1:]))


@pytest.mark.slow
def test_norm_curve_grows_logarithmically():
    curve = shannon_norm_curve([8, 16, 32, 64, 128, 256, 512])
    fit = fit_log_growth(curve)
    assert fit.slope > 0
    assert fit.r_squared > 0.99
    assert curve.values[-1] / curve.values[0] > 1.5


def test_refining_the_t_grid_never_lowers_the_estimate():
    N = 16
    coarse = shannon_norm_estimate(N, np.arange(0.0, N + 2 + 1 / 32, 1 / 16))
    fine = shannon_norm_estimate(N, np.arange(0.0, N + 2 + 1 / 64, 1 / 32))
    assert fine >= coarse


def test_doubling_omega_points_never_lowers_the_estimate():
    N = 16
    t = np.arange(0.0, N + 2 + 1 / 32, 1 / 16)
    base = shannon_norm_estimate(N, t, omega_points=256)
    doubled = shannon_norm_estimate(N, t, omega_points=512)
    assert doubled >= base - 1e-12


def test_coarse_omega_grid_is_refused():
    with pytest.raises(GridTooCoarse):
        shannon_norm_estimate(8, omega_points=16 * 8 - 1)
    with pytest.raises(InvalidParams):
        shannon_kernel_sup(-1, 0.0)


def test_kernel_sup_at_integer_time_is_one():
    assert shannon_kernel_sup(8, [3.0])[0] == pytest.approx(1.0, abs=1e-12)


def test_log_fit_recovers_exact_curve():
    ns = np.array([8, 16, 32, 64])
    curve = NormCurve(ns, 2 / np.pi * np.log(ns) + 1.0)
    fit = fit_log_growth(curve)
    assert fit.slope == pytest.approx(2 / np.pi, abs=1e-12)
    assert fit.intercept == pytest.approx(1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_norm_curve_validation():
    with pytest.raises(InvalidParams):
        NormCurve(np.array([16, 8]), np.array([1.0, 2.0]))
    with pytest.raises(NonFiniteResult):
        NormCurve(np.array([8, 16]), np.array([1.0, np.nan]))
    with pytest.raises(InvalidParams):
        fit_log_growth(NormCurve(np.array([8]), np.array([1.0])))


def test_oscillation_probe_of_reproducing_kernel():
    high, low = oscillation_probe(reproducing_kernel(0.0, np.pi), 8, 10.0)
    assert high == pytest.approx(1.0, abs=1e-3)
    assert low == pytest.approx(-0.21723, abs=1e-3)


def test_oscillation_window_must_cover_partial_sum():
    with pytest.raises(InvalidParams):
        oscillation_probe(reproducing_kernel(0.0, np.pi), 8, 9.0)


def test_local_error_never_exceeds_global():
    profile = error_profile(smooth_signal(2, band=0.8), "shannon", 8, 2.0, 12.0)
    assert profile.local_sup <= profile.global_sup
    assert -12.0 <= profile.argmax_t <= 12.0


def test_error_profile_argument_checks():
    f = smooth_signal(2, band=0.8)
    with pytest.raises(InvalidParams):
        error_profile(f, "shannon", 8, 5.0, 4.0)
    with pytest.raises(InvalidParams):
        error_profile(f, "fourier", 8, 2.0, 4.0)


def test_edge_singular_error_is_local_only():
    f = make_test_signal(TestSignalParams("edge_singular_alpha", {"alpha": 0.5}, band=1.0))
    profiles = [error_profile(f, "shannon", N, 2.0, N + 2.0) for N in (16, 32, 64)]
    local = [p.local_sup for p in profiles]
    contrast = [p.global_sup / p.local_sup for p in profiles]
    assert local[0] > local[1] > local[2]
    assert contrast[0] < contrast[1] < contrast[2]


def test_edge_strip_error_decays_slower_than_the_local_error():
    f = make_test_signal(TestSignalParams("edge_singular_alpha", {"alpha": 0.5}, band=1.0))
    ns = (16, 32, 64)
    edge = [edge_error(f, "shannon", N)[0] for N in ns]
    local = [error_profile(f, "shannon", N, 2.0, N + 2.0).local_sup for N in ns]
    scaled = [np.sqrt(N) * e for N, e in zip(ns, edge)]
    ratio = [e / loc for e, loc in zip(edge, local)]
    assert scaled[0] < scaled[1] < scaled[2]
    assert 1.0 < ratio[0] < ratio[1] < ratio[2]


def test_edge_error_lives_in_the_strips():
    f = smooth_signal(2, band=0.8)
    value, where = edge_error(f, "shannon", 8, width=0.5)
    assert 8.0 <= abs(where) <= 8.5
    assert value <= error_profile(f, "shannon", 8, 2.0, 8.5).global_sup + 1e-12
    with pytest.raises(InvalidParams):
        edge_error(f, "shannon", 8, width=0.0)


def test_sine_type_series_diverges_only_at_the_critical_band():
    family = fejer_crossing_family(64)
    ns = [8, 16, 32, 64]
    critical = sampling_norm_curve(family, ns, beta=1.0).values
    oversampled = sampling_norm_curve(family, ns, beta=0.8).values
    assert all(b > a for a, b in zip(critical, critical[1:]))
    assert critical[-1] - critical[0] > 0.3
    assert abs(oversampled[-1] - oversampled[0]) < 0.2
    assert oversampled[-1] < critical[-1]


def test_walsh_dyadic_projections_have_norm_one():
    table = walsh_norm_table(256)
    for k in range(9):
        assert table[2 ** k - 1] == 1.0


def test_walsh_non_dyadic_values():
    assert walsh_projection_norm(1) == 1.0
    assert walsh_projection_norm(3) == 1.5
    assert walsh_projection_norm(5) == 1.75
    assert max(walsh_norm_table(64)) > 1.5


def test_walsh_monte_carlo_agrees_with_exact_value():
    assert walsh_projection_norm_mc(3, samples=10_000_000, seed=1) == pytest.approx(1.5, abs=1e-3)


def test_walsh_needs_positive_N():
    with pytest.raises(InvalidParams):
        walsh_projection_norm(0)
