import numpy as np
import pytest

from labs.phase_retrieval import (
    BlockEstimate,
    align_global_phase,
    amplitudes_from_blocks,
    block_range,
    build_design,
    frame_diagnostics,
    lift_block,
    lift_blocks,
    measure_amplitudes,
    preprocess_with_u,
    reconstruct,
    recover_signal,
    stitch_phases,
    verify_recovery_condition,
)
from labs.signal_core import (
    Spectrum,
    TestSignalParams,
    Tone,
    add_spectra,
    eval_signal,
    make_test_signal,
    scale_spectrum,
    sup_bound,
)
from services.error_handler import (
    AnchorVanishes,
    InvalidParams,
    LiftingIllConditioned,
    RankDeficient,
    UnsupportedK,
    UScalingFailed,
)
from tests.helpers import anchor_safe_signals, smooth_signal

T_GRID = np.linspace(-5, 5, 201)


def zero_signal(band: float = 0.8) -> Spectrum:
    return Spectrum.from_function(lambda w: np.zeros_like(w), band * np.pi)


def random_blocks(K: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, K)) + 1j * rng.standard_normal((count, K))


# --- frames ---


@pytest.mark.parametrize("K, mode", [(2, "explicit"), (2, "orbit"), (3, "orbit")])
def test_frames_are_tight_and_equiangular(K, mode):
    d = build_design(K, mode)
    tightness, overlap, spread = frame_diagnostics(d.frame)
    assert d.frame.shape == (K * K, K)
    assert tightness < 1e-12
    assert overlap == pytest.approx(1 / (K + 1), abs=1e-12)
    assert spread < 1e-12


def test_design_layout(design2):
    assert design2.beta == 1.0
    assert list(design2.shifts) == [1.0, 2.0]
    assert design2.sampling_rate == 4.0
    assert build_design(3).sampling_rate == 4.5
    assert block_range(design2, 64) == (-65, 63)


def test_unsupported_frame_dimensions():
    with pytest.raises(UnsupportedK):
        build_design(4)
    with pytest.raises(InvalidParams):
        build_design(3, mode="explicit")


def test_recovery_condition_holds_for_built_designs(design2):
    report = verify_recovery_condition(design2)
    assert report.cond1 and report.cond2 and report.cond3
    assert report.passed
    assert verify_recovery_condition(build_design(3)).passed


def test_recovery_condition_detects_broken_designs(design2):
    shifted = verify_recovery_condition(design2.replace(shifts=np.array([1.0, 1.9])))
    assert not shifted.cond1
    assert not shifted.passed
    degenerate = design2.frame.copy()
    degenerate[0] = 0
    assert not verify_recovery_condition(design2.replace(frame=degenerate)).cond3


def test_design_validation(design2):
    with pytest.raises(InvalidParams):
        design2.replace(shifts=np.array([1.0, 2.0, 3.0]))
    with pytest.raises(InvalidParams):
        design2.replace(signal_band=1.0)


# --- forward map ---


def test_zero_signal_has_zero_amplitudes(design2):
    samples = measure_amplitudes(zero_signal(), design2, (-3, 3))
    assert samples.c.shape == (7, 4)
    assert np.all(samples.c == 0)


def test_amplitudes_ignore_a_global_phase(design2):
    f = smooth_signal(9)
    base = measure_amplitudes(f, design2, (-10, 10))
    assert np.array_equal(base.c, measure_amplitudes(scale_spectrum(f, np.exp(0j)), design2, (-10, 10)).c)
    for theta in (np.pi / 7, np.pi / 2, 1.0):
        rotated = measure_amplitudes(scale_spectrum(f, np.exp(1j * theta)), design2, (-10, 10))
        assert np.max(np.abs(rotated.c - base.c)) <= 1e-12 * np.max(base.c)


# --- lifting ---


def test_lifting_a_basis_vector(design2):
    c = amplitudes_from_blocks(np.array([[1.0, 0.0]]), design2, 0).c[0]
    assert np.allclose(c, np.abs(design2.frame[:, 0]) ** 2)
    estimate = lift_block(c, design2)
    assert np.allclose(np.abs(estimate.v), [1.0, 0.0], atol=1e-10)
    assert estimate.residual < 1e-10
    assert estimate.anchor_mag == pytest.approx(1.0, abs=1e-10)


def test_lifting_zero_intensities(design2):
    estimate = lift_block(np.zeros(4), design2)
    assert np.all(estimate.v == 0)
    assert estimate.residual == 0.0


@pytest.mark.parametrize("K", [2, 3])
def test_lifting_recovers_blocks_up_to_a_unit_scalar(K):
    d = build_design(K)
    values = random_blocks(K, 1000, seed=K)
    samples = amplitudes_from_blocks(values, d, 0)
    for v, estimate in zip(values, lift_blocks(samples, d)):
        scale = np.vdot(v, v).real
        assert np.allclose(np.abs(estimate.v), np.abs(v), atol=1e-9 * np.sqrt(scale))
        assert abs(np.vdot(estimate.v, v)) == pytest.approx(scale, rel=1e-9)
        assert np.linalg.norm(np.outer(estimate.v, estimate.v.conj()) - np.outer(v, v.conj())) < 1e-9 * scale


def test_lifting_refuses_rank_deficient_frames(design2):
    collapsed = design2.replace(frame=np.tile([1.0, 0.0], (4, 1)))
    with pytest.raises(LiftingIllConditioned):
        lift_block(np.ones(4), collapsed)


def test_lifting_refuses_negative_definite_solutions(design2):
    with pytest.raises(RankDeficient):
        lift_block(-np.ones(4), design2)


# --- stitching ---


def test_single_block_is_normalized_to_a_positive_anchor(design2):
    block = BlockEstimate(np.exp(0.7j) * np.array([0.6, 0.8]), 0.0, 0.6, 0)
    stitched = stitch_phases([block], design2)
    assert stitched.values[0] == pytest.approx(0.6, abs=1e-15)
    assert stitched.points.tolist() == [1.0]


def test_stitching_recovers_samples_up_to_one_phase(design2):
    tone = Tone(np.array([1.0, 0.5]), np.array([0.3, -1.1]), band_edge=2.0)
    samples = measure_amplitudes(tone, design2, (-5, 5))
    stitched = stitch_phases(lift_blocks(samples, design2), design2)
    truth = eval_signal(tone, stitched.points)
    aligned, _ = align_global_phase(truth, stitched.values)
    assert np.max(np.abs(aligned - truth)) < 1e-8


def test_vanishing_anchor_is_reported(design2):
    blocks = [BlockEstimate(np.array([1.0, 1.0 + 0j]), 0.0, 1.0, 6),
              BlockEstimate(np.array([0.0, 1.0 + 0j]), 0.0, 0.0, 7)]
    with pytest.raises(AnchorVanishes) as excinfo:
        stitch_phases(blocks, design2)
    assert excinfo.value.index == 7


def test_global_phase_alignment():
    reference = np.array([1.0 + 1j, 2.0, -0.5j])
    aligned, theta = align_global_phase(reference, np.exp(-0.4j) * reference)
    assert theta == pytest.approx(0.4, abs=1e-14)
    assert np.allclose(aligned, reference, atol=1e-14)


# --- reconstruction ---


def test_recovery_of_smooth_signals(design2):
    signals = anchor_safe_signals(design2, 64, count=5)
    assert len(signals) == 5
    for f in signals:
        result = recover_signal(f, design2, 64, T_GRID)
        truth = eval_signal(f, T_GRID)
        aligned, _ = align_global_phase(truth, result.values)
        assert np.max(np.abs(aligned - truth)) < 1e-6
        assert result.sampling_rate == 4.0


def test_recovery_with_three_dimensional_blocks():
    d = build_design(3)
    signals = anchor_safe_signals(d, 64, count=3)
    assert len(signals) == 3
    for f in signals:
        result = recover_signal(f, d, 64, T_GRID)
        truth = eval_signal(f, T_GRID)
        aligned, _ = align_global_phase(truth, result.values)
        assert np.max(np.abs(aligned - truth)) < 1e-5
        assert result.sampling_rate == 4.5


@pytest.mark.slow
def test_recovery_success_rate(design2):
    signals = anchor_safe_signals(design2, 64, count=50)
    successes = 0
    for f in signals:
        truth = eval_signal(f, T_GRID)
        aligned, _ = align_global_phase(truth, recover_signal(f, design2, 64, T_GRID).values)
        successes += int(np.max(np.abs(aligned - truth)) < 1e-6)
    assert successes >= 49


def test_reconstruct_needs_full_coverage(design2):
    samples = measure_amplitudes(smooth_signal(1), design2, (-3, 3))
    stitched = stitch_phases(lift_blocks(samples, design2), design2)
    with pytest.raises(InvalidParams):
        reconstruct(stitched, design2, 0.0, N=10)


def test_recovery_refuses_full_band_signals(design2):
    f = make_test_signal(TestSignalParams("random_smooth", {"degree": 2}, 3, band=1.0))
    with pytest.raises(InvalidParams):
        recover_signal(f, design2, 16, 0.0)


def test_zero_signal_has_no_anchor(design2):
    with pytest.raises(AnchorVanishes):
        recover_signal(zero_signal(), design2, 16, 0.0)


# --- preprocessing with a known sine ---


def vanishing_at_first_anchor(design, seed: int = 5) -> Spectrum:
    g = smooth_signal(seed)
    h = make_test_signal(TestSignalParams("random_smooth", {"degree": 0}, seed, band=0.8))
    anchor = design.block_points([0])[0, 0]
    return add_spectra(g, h, -eval_signal(g, anchor) / eval_signal(h, anchor))


def test_known_sine_rescues_vanishing_anchor(design2):
    f = vanishing_at_first_anchor(design2)
    with pytest.raises(AnchorVanishes) as excinfo:
        recover_signal(f, design2, 64, T_GRID)
    assert excinfo.value.index == 0

    u, result = preprocess_with_u(f, design2, sup_bound(f), 64, T_GRID)
    assert np.max(np.abs(result.values - eval_signal(f, T_GRID))) < 1e-5
    assert result.extras["u_scale"] in (2.0, 4.0, 8.0)
    assert 0.8 < result.extras["beta1"] < 1.0
    assert u.sup_bound == pytest.approx(result.extras["u_scale"] * sup_bound(f))


def test_known_sine_on_zero_signal(design2):
    _, result = preprocess_with_u(zero_signal(), design2, 1.0, 64, T_GRID)
    assert np.max(np.abs(result.values)) < 1e-10


def test_known_sine_scaling_failure(design2):
    with pytest.raises(UScalingFailed):
        preprocess_with_u(zero_signal(), design2, 1.0, 16, T_GRID, scales=(0.01,))


@pytest.mark.slow
def test_known_sine_at_four_times_the_peak_always_succeeds(design2):
    failures = []
    for seed in range(100):
        f = smooth_signal(seed)
        try:
            _, result = preprocess_with_u(f, design2, sup_bound(f), 64, T_GRID, scales=(4.0,))
        except UScalingFailed:
            failures.append(seed)
            continue
        if np.max(np.abs(result.values - eval_signal(f, T_GRID))) >= 1e-5:
            failures.append(seed)
    assert failures == []


def test_known_sine_too_weak_to_cover_a_vanishing_anchor(design2):
    f = vanishing_at_first_anchor(design2)
    with pytest.raises(UScalingFailed):
        preprocess_with_u(f, design2, sup_bound(f), 64, T_GRID, scales=(0.01,))


def test_known_sine_argument_checks(design2):
    with pytest.raises(InvalidParams):
        preprocess_with_u(zero_signal(), design2, 0.0)
    with pytest.raises(InvalidParams):
        preprocess_with_u(zero_signal(), design2, 1.0, beta1=0.7)
    with pytest.raises(InvalidParams):
        preprocess_with_u(zero_signal(band=1.0), design2, 1.0)
