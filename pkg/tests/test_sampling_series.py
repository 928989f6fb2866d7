import numpy as np
import pytest

from labs.sampling_series import (
    DerivativeRule,
    KernelFamily,
    Provenance,
    SamplingSet,
    closed_sine,
    find_sine_type_zeros,
    generating_function_derivative,
    generating_function_eval,
    kernel_eval,
    nonuniform_series,
    shannon_family,
    shannon_series,
    sine_wave_crossing,
    truncated_product,
    verify_sine_type,
)
from labs.signal_core import (
    Spectrum,
    TestSignalParams,
    add_spectra,
    eval_signal,
    make_test_signal,
    pw_norm,
    reproducing_kernel,
    scale_spectrum,
    sup_bound,
)
from services.error_handler import BracketFailure, IndexOutOfRange, InvalidParams, RadiusTooSmall
from tests.helpers import smooth_signal, trig_signal


def test_closed_sine_values_and_derivative():
    gen = closed_sine()
    assert generating_function_eval(gen, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert generating_function_derivative(gen, 0.0) == pytest.approx(np.pi, abs=1e-15)
    assert gen.derivative_rule is DerivativeRule.ANALYTIC


def test_crossing_function_at_origin(perturbation):
    gen = sine_wave_crossing(2.0, perturbation)
    assert generating_function_eval(gen, 0.0) == pytest.approx(-0.3, abs=1e-12)


def test_unperturbed_crossing_recovers_integers():
    zero = scale_spectrum(reproducing_kernel(0.0, np.pi), 0.0)
    zeros = find_sine_type_zeros(sine_wave_crossing(1.0, zero), (-5, 5))
    assert np.allclose(zeros.points, np.arange(-5, 6), atol=1e-12)
    assert zeros.provenance is Provenance.SINE_TYPE_ZEROS


def test_crossing_zeros_stay_near_integers(crossing_family):
    zeros = crossing_family.zero_set
    lam0 = zeros.point(0)
    assert -0.5 < lam0 < 0.5
    assert lam0 > 0
    residual = generating_function_eval(crossing_family.generating, zeros.points)
    assert np.max(np.abs(residual)) < 1e-12
    assert zeros.separation >= 0.25
    assert np.all(np.abs(zeros.points - zeros.indices) < 0.5)


def test_small_amplitude_has_no_bracket(perturbation):
    with pytest.raises(BracketFailure):
        find_sine_type_zeros(sine_wave_crossing(0.1, perturbation), (-5, 5))


def test_amplitude_must_exceed_the_pw1_norm_not_just_the_peak():
    # Fejér g of band π/2: sup |g| = 0.3 while the normalized PW¹ norm is 0.6
    g = make_test_signal(TestSignalParams("fejer", {"scale": 1.2}, band=0.5))
    assert sup_bound(g) == pytest.approx(0.3, rel=1e-6)
    assert pw_norm(g, 1).value == pytest.approx(0.6, rel=1e-6)
    with pytest.raises(BracketFailure) as excinfo:
        find_sine_type_zeros(sine_wave_crossing(0.45, g), (-4, 4))
    assert excinfo.value.context["g_norm"] == pytest.approx(0.6, rel=1e-6)
    zeros = find_sine_type_zeros(sine_wave_crossing(0.65, g), (-4, 4))
    assert zeros.points.size == 9


def test_complex_perturbation_is_rejected():
    g = scale_spectrum(reproducing_kernel(0.0, np.pi), 1j)
    with pytest.raises(InvalidParams):
        find_sine_type_zeros(sine_wave_crossing(2.0, g), (-5, 5))


def test_zero_finding_needs_a_crossing_function():
    with pytest.raises(InvalidParams):
        find_sine_type_zeros(closed_sine(), (-5, 5))


def test_sine_type_bounds_of_closed_sine():
    report = verify_sine_type(closed_sine(), H=2.0, strip_samples=401)
    assert report.passed
    assert report.a_est == pytest.approx(0.5, abs=1e-4)
    assert report.b_est == pytest.approx(0.5, abs=1e-4)


def test_sine_type_bounds_of_crossing(perturbation):
    report = verify_sine_type(sine_wave_crossing(2.0, perturbation), H=2.0, strip_samples=201)
    assert report.passed
    assert 0 < report.a_est <= report.b_est


def test_sine_type_fails_below_perturbation_bound(perturbation):
    report = verify_sine_type(sine_wave_crossing(0.1, perturbation), H=2.0, strip_samples=51)
    assert not report.passed
    assert "amplitude" in report.reason


def test_sine_type_strip_limit():
    with pytest.raises(InvalidParams):
        verify_sine_type(closed_sine(), H=6.0, strip_samples=11)


def test_kernels_interpolate_their_nodes(crossing_family):
    zeros = crossing_family.zero_set
    for n in (-3, 0, 4):
        assert kernel_eval(crossing_family, n, zeros.point(n)) == 1.0
        others = zeros.select(np.array([m for m in range(-6, 7) if m != n]))
        assert np.max(np.abs(kernel_eval(crossing_family, n, others))) < 1e-9


def test_integer_kernels_are_sinc():
    k = shannon_family(16)
    assert k.is_shannon
    assert kernel_eval(k, 3, 3.0) == 1.0
    assert abs(kernel_eval(k, 3, 5.0)) < 1e-15
    assert kernel_eval(k, 0, 0.5) == pytest.approx(2 / np.pi, abs=1e-15)


def test_shannon_series_of_reproducing_kernel():
    r0 = reproducing_kernel(0.0, np.pi)
    for N in (0, 4, 32):
        assert shannon_series(r0, N, 0.5) == pytest.approx(2 / np.pi, abs=1e-10)


def test_shannon_series_reproduces_full_band_trig_polynomials():
    f = trig_signal(21, band=1.0, degree=4)
    t = np.linspace(-5, 5, 101)
    assert np.max(np.abs(shannon_series(f, 8, t) - eval_signal(f, t))) < 1e-5


def test_shannon_series_converges_for_smooth_signals():
    f = smooth_signal(3, band=0.8)
    t = np.linspace(-5, 5, 201)
    truth = eval_signal(f, t)
    errors = [np.max(np.abs(shannon_series(f, N, t) - truth)) for N in (8, 16, 32)]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-4


def test_series_is_linear():
    f, g = trig_signal(1, band=0.8), trig_signal(2, band=0.8)
    combined = add_spectra(f, g, b_factor=-2.5)
    t = np.linspace(-3, 3, 31)
    lhs = shannon_series(combined, 16, t)
    rhs = shannon_series(f, 16, t) - 2.5 * shannon_series(g, 16, t)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_kernels_do_not_depend_on_generating_scale(crossing_family):
    rescaled = KernelFamily(crossing_family.generating.scaled(3 + 1j))
    t = np.linspace(-4, 4, 33)
    a = crossing_family.matrix(np.arange(-5, 6), t)
    b = rescaled.matrix(np.arange(-5, 6), t)
    assert np.max(np.abs(a - b)) < 1e-12


def test_nonuniform_series_reconstructs_smooth_signal(crossing_family):
    f = smooth_signal(5, band=0.8)
    t = np.linspace(-3, 3, 61)
    error = np.max(np.abs(nonuniform_series(f, crossing_family, 32, t) - eval_signal(f, t)))
    assert error < 1e-3


def test_nonuniform_series_outside_kernel_range(crossing_family):
    with pytest.raises(IndexOutOfRange):
        nonuniform_series(trig_signal(1, band=0.8), crossing_family, 41, 0.0)
    with pytest.raises(IndexOutOfRange):
        kernel_eval(crossing_family, 50, 0.0)


def test_series_refuses_signals_above_pi():
    grid_band = 1.2 * np.pi
    f = Spectrum.from_function(lambda w: np.ones_like(w), grid_band)
    with pytest.raises(InvalidParams):
        shannon_series(f, 4, 0.0)
    with pytest.raises(InvalidParams):
        shannon_series(reproducing_kernel(0.0, np.pi), -1, 0.0)


def test_truncated_product_approximates_sine():
    gen = truncated_product(SamplingSet.integers(-10000, 10000), radius=1e4)
    assert gen.derivative_rule is DerivativeRule.CENTRAL_DIFFERENCE
    assert generating_function_eval(gen, 0.5) == pytest.approx(1 / np.pi, abs=1e-3)


def test_truncated_product_kernels_match_sinc():
    family = KernelFamily(truncated_product(SamplingSet.integers(-10000, 10000), radius=1e4))
    z = np.linspace(-2, 2, 41)
    for n in (-1, 0, 1):
        assert np.max(np.abs(kernel_eval(family, n, z) - np.sinc(z - n))) < 1e-3


def test_truncated_product_radius_checks():
    small = SamplingSet.integers(-10, 10)
    with pytest.raises(RadiusTooSmall):
        generating_function_eval(truncated_product(small), 5.0)
    with pytest.raises(InvalidParams):
        generating_function_eval(truncated_product(small, radius=100.0), 0.5)


def test_truncated_product_radius_scales_with_z_squared():
    gen = truncated_product(SamplingSet.integers(-10000, 10000))
    assert generating_function_eval(gen, 3.1) == pytest.approx(np.sin(3.1 * np.pi) / np.pi, abs=2e-4)
    with pytest.raises(RadiusTooSmall):
        generating_function_eval(gen, 3.2)
    with pytest.raises(RadiusTooSmall):
        generating_function_eval(truncated_product(SamplingSet.integers(-10000, 10000), radius=5000.0), 3.0)


def test_truncated_product_kernels_refuse_far_points():
    family = KernelFamily(truncated_product(SamplingSet.integers(-512, 512)))
    assert abs(kernel_eval(family, 0, 0.5) - np.sinc(0.5)) < 1e-3
    with pytest.raises(RadiusTooSmall):
        kernel_eval(family, 0, 100.5)


def test_sampling_set_validation():
    with pytest.raises(InvalidParams):
        SamplingSet(np.array([0.0, 2.0, 1.0]), 0, Provenance.SINE_TYPE_ZEROS)
    with pytest.raises(InvalidParams):
        SamplingSet(np.array([0.0, 1.5]), 0, Provenance.INTEGERS)
    lattice = SamplingSet.integers(-3, 3)
    assert lattice.covers(-3, 3) and not lattice.covers(-4, 3)
    with pytest.raises(IndexOutOfRange):
        lattice.select(np.array([4]))
