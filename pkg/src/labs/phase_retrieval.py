"""Phase Retrieval - recovering bandlimited signals from amplitude-only measurements.

Measurements are c_{n,m} = |a_m^* v_n|² where v_n = (f(nβ + λ_1), ..., f(nβ + λ_K))
is the n-th block and {a_m} is a 2-uniform tight frame of K² vectors in ℂ^K.
Recovery runs in four steps:

1. lift each block: solve the linear system for the Hermitian V = v v^*
2. take the dominant eigenpair of V by power iteration
3. chain block phases through the shared sample f((n+1)β + λ_1)
4. interpolate the stitched samples with the sampling series over Λ

Preprocessing with a known sine u keeps every anchor away from zero when
f itself vanishes at an anchor.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from labs.sampling_series import (
    KernelFamily,
    closed_sine,
    generating_function_eval,
    series_from_samples,
    verify_sine_type,
)
from labs.signal_core import Signal, Tone, eval_signal, sine_tone
from services.error_handler import (
    AnchorVanishes,
    InvalidParams,
    LiftingIllConditioned,
    NonFiniteResult,
    RankDeficient,
    UnsupportedK,
    UScalingFailed,
)

FRAME_TOL = 1e-10
ANCHOR_THRESHOLD = 1e-6
CONDITION_LIMIT = 1e12
POWER_ITERATIONS = 50
POWER_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class MeasurementDesign:
    """K shifts λ_1 < ... < λ_K with λ_K = λ_1 + β, and K² frame vectors (rows of frame)."""

    K: int
    beta: float
    shifts: np.ndarray
    frame: np.ndarray
    anchor_threshold: float = ANCHOR_THRESHOLD
    signal_band: float = 0.8
    mode: str = "explicit"

    def __post_init__(self):
        shifts = np.asarray(self.shifts, dtype=float)
        frame = np.asarray(self.frame, dtype=complex)
        if shifts.shape != (self.K,):
            raise InvalidParams(f"need {self.K} shifts, got {shifts.shape}")
        if frame.ndim != 2 or frame.shape[1] != self.K:
            raise InvalidParams(f"frame vectors must have dimension {self.K}")
        if not 0 < self.signal_band < 1:
            raise InvalidParams(f"signal band fraction must lie in (0, 1), got {self.signal_band}")
        for name, array in (("shifts", shifts), ("frame", frame)):
            array = array.copy()
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def sampling_rate(self) -> float:
        """Measurements per unit length, K²/β."""
        return self.frame.shape[0] / self.beta

    def block_points(self, indices: Sequence[int]) -> np.ndarray:
        indices = np.asarray(indices, dtype=float)
        return indices[:, None] * self.beta + self.shifts[None, :]

    def sampling_points(self, indices: Sequence[int]) -> np.ndarray:
        """Λ restricted to blocks: nβ + λ_k for k = 1..K-1."""
        return self.block_points(indices)[:, :-1].ravel()

    def generating_function(self, n_min: int = -512, n_max: int = 512):
        if np.allclose(self.shifts, np.round(self.shifts)) and float(self.beta).is_integer():
            return closed_sine(n_min, n_max)
        raise InvalidParams("only integer lattices have a closed-form generating function here")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "K": self.K,
            "beta": self.beta,
            "shifts": self.shifts.tolist(),
            "frame": {"re": self.frame.real.tolist(), "im": self.frame.imag.tolist()},
            "anchor_threshold": self.anchor_threshold,
            "signal_band": self.signal_band,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MeasurementDesign":
        frame = np.asarray(data["frame"]["re"]) + 1j * np.asarray(data["frame"]["im"])
        return cls(int(data["K"]), float(data["beta"]), np.asarray(data["shifts"]), frame,
                   float(data.get("anchor_threshold", ANCHOR_THRESHOLD)),
                   float(data.get("signal_band", 0.8)), data.get("mode", "explicit"))

    def replace(self, **changes) -> "MeasurementDesign":
        fields = {
            "K": self.K, "beta": self.beta, "shifts": self.shifts, "frame": self.frame,
            "anchor_threshold": self.anchor_threshold, "signal_band": self.signal_band, "mode": self.mode,
        }
        fields.update(changes)
        return MeasurementDesign(**fields)


# --- frames ----------------------------------------------------------------------

def _tetrahedron() -> np.ndarray:
    phases = np.exp(2j * np.pi * np.arange(3) / 3)
    rest = np.column_stack([np.full(3, 1 / np.sqrt(3)), np.sqrt(2 / 3) * phases])
    return np.vstack([[1.0, 0.0], rest])


def _weyl_heisenberg_orbit(fiducial: np.ndarray) -> np.ndarray:
    K = fiducial.size
    shift = np.roll(np.eye(K), 1, axis=0)
    clock = np.diag(np.exp(2j * np.pi * np.arange(K) / K))
    vectors = []
    for j in range(K):
        for k in range(K):
            op = np.linalg.matrix_power(shift, j) @ np.linalg.matrix_power(clock, k)
            vectors.append(op @ fiducial)
    return np.array(vectors)


def _fiducial(K: int) -> np.ndarray:
    if K == 2:
        theta = np.arccos(1 / np.sqrt(3))
        return np.array([np.cos(theta / 2), np.exp(1j * np.pi / 4) * np.sin(theta / 2)])
    return np.array([0.0, 1.0, -1.0]) / np.sqrt(2)


def build_design(K: int = 2, mode: Optional[str] = None, signal_band: float = 0.8) -> MeasurementDesign:
    """Shifts λ_k = k, β = K - 1, and a tight frame of K² unit vectors with |⟨a_i, a_j⟩|² = 1/(K+1)."""
    if K not in (2, 3):
        raise UnsupportedK(f"frames are built for K = 2 and K = 3, got K = {K}", context={"K": K})
    mode = mode or ("explicit" if K == 2 else "orbit")
    if mode == "explicit" and K == 2:
        frame = _tetrahedron()
    elif mode == "orbit":
        frame = _weyl_heisenberg_orbit(_fiducial(K))
    else:
        raise InvalidParams(f"unknown frame mode {mode!r} for K = {K}")
    frame = frame / np.linalg.norm(frame, axis=1, keepdims=True)
    logger.debug(f"Built K={K} design ({mode}) with {frame.shape[0]} frame vectors")
    return MeasurementDesign(K, float(K - 1), np.arange(1, K + 1, dtype=float), frame,
                             signal_band=signal_band, mode=mode)


@dataclass(frozen=True)
class RecoveryConditionReport:
    cond1: bool
    cond2: bool
    cond3: bool
    tightness_error: float
    equiangular_spread: float
    passed: bool


def frame_diagnostics(frame: np.ndarray) -> Tuple[float, float, float]:
    """(tightness error ‖Σ a a^* - K·I‖_F, mean off-diagonal |⟨a_i,a_j⟩|², spread of those values)."""
    K = frame.shape[1]
    frame_operator = frame.T @ frame.conj()
    tightness = float(np.linalg.norm(frame_operator - K * np.eye(K)))
    gram = np.abs(frame.conj() @ frame.T) ** 2
    off = gram[~np.eye(frame.shape[0], dtype=bool)]
    return tightness, float(off.mean()), float(off.max() - off.min())


def verify_recovery_condition(d: MeasurementDesign, blocks: int = 16) -> RecoveryConditionReport:
    cond1 = abs(d.shifts[-1] - d.shifts[0] - d.beta) <= FRAME_TOL
    try:
        gen = d.generating_function()
        report = verify_sine_type(gen, H=2.0, strip_samples=401)
        points = d.sampling_points(np.arange(-blocks, blocks + 1))
        cond2 = report.passed and bool(np.all(np.abs(generating_function_eval(gen, points)) < 1e-9))
    except InvalidParams:
        cond2 = False
    tightness, _, spread = frame_diagnostics(d.frame)
    cond3 = (d.frame.shape[0] == d.K ** 2 and tightness < FRAME_TOL and spread < FRAME_TOL)
    return RecoveryConditionReport(cond1, cond2, cond3, tightness, spread, cond1 and cond2 and cond3)


# --- forward map -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AmplitudeSamples:
    indices: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if np.any(~np.isfinite(c)):
            raise NonFiniteResult("amplitude samples must be finite")
        if np.any(c < 0):
            raise InvalidParams("amplitude samples must be nonnegative")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=int))


def block_values(f: Signal, d: MeasurementDesign, n_range: Tuple[int, int]) -> np.ndarray:
    """v_n for every block n in the inclusive range, shape (blocks, K); each point evaluated once."""
    indices = np.arange(n_range[0], n_range[1] + 1)
    return np.asarray(eval_signal(f, d.block_points(indices)), dtype=complex)


def amplitudes_from_blocks(values: np.ndarray, d: MeasurementDesign, first_index: int) -> AmplitudeSamples:
    c = np.abs(values @ d.frame.conj().T) ** 2
    return AmplitudeSamples(np.arange(first_index, first_index + values.shape[0]), c)


def measure_amplitudes(f: Signal, d: MeasurementDesign, n_range: Tuple[int, int]) -> AmplitudeSamples:
    """c[n][m] = |a_m^* v_n|²."""
    return amplitudes_from_blocks(block_values(f, d, n_range), d, int(n_range[0]))


# --- lifting -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockEstimate:
    v: np.ndarray
    residual: float
    anchor_mag: float
    index: int = 0


def _lifting_matrix(frame: np.ndarray) -> np.ndarray:
    """Rows map the real parameters of a Hermitian V to a_m^* V a_m."""
    K = frame.shape[1]
    columns = [np.abs(frame[:, k]) ** 2 for k in range(K)]
    for k in range(K):
        for l in range(k + 1, K):
            z = np.conj(frame[:, k]) * frame[:, l]
            columns.append(2 * z.real)
            columns.append(-2 * z.imag)
    return np.column_stack(columns)


def _hermitian_from_parameters(x: np.ndarray, K: int) -> np.ndarray:
    V = np.diag(x[:K]).astype(complex)
    pos = K
    for k in range(K):
        for l in range(k + 1, K):
            V[k, l] = x[pos] + 1j * x[pos + 1]
            V[l, k] = np.conj(V[k, l])
            pos += 2
    return V


def _dominant_eigenpair(V: np.ndarray) -> Tuple[float, np.ndarray]:
    u = V[:, np.argmax(np.linalg.norm(V, axis=0))]
    u = u / np.linalg.norm(u)
    mu = float(np.real(np.vdot(u, V @ u)))
    for _ in range(POWER_ITERATIONS):
        w = V @ u
        norm = np.linalg.norm(w)
        if norm == 0:
            break
        w = w / norm
        # fix the phase so successive iterates are comparable
        pivot = np.argmax(np.abs(w))
        w = w * np.exp(-1j * np.angle(w[pivot]))
        new_mu = float(np.real(np.vdot(w, V @ w)))
        converged = np.linalg.norm(w - u) < POWER_TOL or abs(new_mu - mu) <= POWER_TOL * max(abs(new_mu), 1.0)
        u, mu = w, new_mu
        if converged:
            break
    return mu, u


def lift_block(c_n: np.ndarray, d: MeasurementDesign, index: int = 0) -> BlockEstimate:
    """Recover v (up to a unit scalar) from the K² intensities of one block."""
    c_n = np.asarray(c_n, dtype=float)
    M = _lifting_matrix(d.frame)
    normal = M.T @ M
    condition = np.linalg.cond(normal)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise LiftingIllConditioned(
            f"lifting system condition number {condition:.3e} exceeds {CONDITION_LIMIT:.0e}",
            context={"condition": float(condition), "block": index},
        )
    x = np.linalg.solve(normal, M.T @ c_n)
    V = _hermitian_from_parameters(x, d.K)

    if not np.any(V):
        return BlockEstimate(np.zeros(d.K, dtype=complex), 0.0, 0.0, index)

    mu, u = _dominant_eigenpair(V)
    if mu <= 0:
        raise RankDeficient(f"dominant eigenvalue {mu:.3e} is not positive", context={"block": index})
    v = np.sqrt(mu) * u
    residual = float(np.linalg.norm(V - np.outer(v, v.conj())))
    return BlockEstimate(v, residual, float(abs(v[0])), index)


def lift_blocks(samples: AmplitudeSamples, d: MeasurementDesign) -> List[BlockEstimate]:
    return [lift_block(c, d, int(n)) for n, c in zip(samples.indices, samples.c)]


# --- stitching -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StitchedSamples:
    points: np.ndarray
    values: np.ndarray
    block_indices: np.ndarray


def stitch_phases(blocks: Sequence[BlockEstimate], d: MeasurementDesign) -> StitchedSamples:
    """Chain unit phases so consecutive blocks agree on their shared sample."""
    if not blocks:
        raise InvalidParams("nothing to stitch")
    aligned: List[np.ndarray] = []
    previous_tail: Optional[complex] = None
    for block in blocks:
        peak = float(np.max(np.abs(block.v)))
        threshold = d.anchor_threshold * peak
        anchor = block.v[0]
        if peak == 0 or abs(anchor) <= threshold:
            raise AnchorVanishes(block.index, float(abs(anchor)), threshold)
        if previous_tail is None:
            rotation = np.conj(anchor) / abs(anchor)
        else:
            link = previous_tail * np.conj(anchor)
            if link == 0:
                raise AnchorVanishes(block.index, 0.0, threshold)
            rotation = link / abs(link)
        v = block.v * rotation
        aligned.append(v)
        previous_tail = v[-1]

    indices = np.array([b.index for b in blocks])
    values = np.concatenate([v[:-1] for v in aligned])
    return StitchedSamples(d.sampling_points(indices), values, indices)


# --- reconstruction --------------------------------------------------------------

def block_range(d: MeasurementDesign, N: int) -> Tuple[int, int]:
    """Blocks whose Λ-points cover [-N, N]."""
    n_min = int(np.floor((-N - d.shifts[0]) / d.beta))
    n_max = int(np.ceil((N - d.shifts[0]) / d.beta))
    return n_min, n_max


def _kernel_for(d: MeasurementDesign, N: int) -> KernelFamily:
    return KernelFamily(d.generating_function(-max(N, 512), max(N, 512)))


def _centered(samples: StitchedSamples, N: int) -> Tuple[np.ndarray, np.ndarray]:
    keep = np.abs(samples.points) <= N + 1e-9
    points = samples.points[keep]
    expected = np.arange(-N, N + 1, dtype=float)
    if points.size != 2 * N + 1 or not np.allclose(points, expected):
        raise InvalidParams(f"stitched samples do not cover the 2N+1 points of [-{N}, {N}]",
                            context={"N": N, "covered": int(points.size)})
    return expected.astype(int), samples.values[keep]


def reconstruct(samples: StitchedSamples, d: MeasurementDesign, t, N: Optional[int] = None):
    """Interpolate 2N+1 stitched samples with the sampling series over Λ."""
    if N is None:
        N = int(np.floor(np.min(np.abs([samples.points.min(), samples.points.max()]))))
    indices, values = _centered(samples, N)
    return series_from_samples(values, _kernel_for(d, N), indices, t)


def align_global_phase(reference: np.ndarray, estimate: np.ndarray) -> Tuple[np.ndarray, float]:
    """Rotate estimate by the unit scalar that best matches reference in least squares."""
    inner = np.vdot(estimate, reference)
    theta = float(np.angle(inner)) if inner != 0 else 0.0
    return estimate * np.exp(1j * theta), theta


@dataclass
class RecoveryResult:
    t: np.ndarray
    values: np.ndarray
    samples: StitchedSamples
    blocks: List[BlockEstimate]
    amplitudes: AmplitudeSamples
    sampling_rate: float
    max_residual: float
    extras: Dict[str, Any] = field(default_factory=dict)


def _check_band(f: Signal, d: MeasurementDesign) -> None:
    band = f.band_edge / np.pi
    if band >= 1 - 1e-12:
        raise InvalidParams(
            "recovery needs oversampling: the signal band must stay strictly below π",
            context={"band_fraction": band},
        )
    if band > d.signal_band * (1 + 1e-12):
        raise InvalidParams(f"signal band {band:.3f}π exceeds the design band {d.signal_band}π")


def _lift_and_stitch(values: np.ndarray, d: MeasurementDesign, N: int):
    n_min, _ = block_range(d, N)
    amplitudes = amplitudes_from_blocks(values, d, n_min)
    blocks = lift_blocks(amplitudes, d)
    return amplitudes, blocks, stitch_phases(blocks, d)


def recover_from_values(values: np.ndarray, d: MeasurementDesign, N: int, t) -> RecoveryResult:
    amplitudes, blocks, stitched = _lift_and_stitch(values, d, N)
    t_arr = np.asarray(t, dtype=float)
    recovered = reconstruct(stitched, d, t_arr, N)
    return RecoveryResult(t_arr, np.asarray(recovered), stitched, blocks, amplitudes, d.sampling_rate,
                          max(b.residual for b in blocks))


def recover_signal(f: Signal, d: MeasurementDesign, N: int, t) -> RecoveryResult:
    """Measure, lift, stitch and reconstruct f on t; the output matches f up to one unit scalar.

    Args:
        f: Signal of band below the design's signal band
        d: Measurement design (frame, shifts, β)
        N: Half-width of the stitched sample range
        t: Output times

    Returns:
        RecoveryResult with the reconstructed values, stitched samples and per-block residuals

    Raises:
        AnchorVanishes: A block anchor falls below the relative threshold
    """
    _check_band(f, d)
    values = block_values(f, d, block_range(d, N))
    result = recover_from_values(values, d, N, t)
    logger.debug(f"Recovered signal from {result.amplitudes.c.size} intensities, max residual {result.max_residual:.2e}")
    return result


# --- preprocessing with a known sine ------------------------------------------------

def _best_shift(lattice: np.ndarray, beta1: float, candidates: int = 1024) -> Tuple[float, float]:
    """Shift t0 maximizing min |sin(β₁π(λ - t0))| over the lattice."""
    t0 = np.linspace(0.0, 2.0 / beta1, candidates, endpoint=False)
    margins = np.abs(np.sin(beta1 * np.pi * (lattice[None, :] - t0[:, None]))).min(axis=1)
    best = int(np.argmax(margins))
    return float(t0[best]), float(margins[best])


def _kaiser_beta(separation: float, length: int) -> float:
    """Largest Kaiser β (capped) whose main lobe stays inside the frequency gap."""
    half_length = 0.5 * (length - 1)
    reach = 0.9 * separation * half_length
    return float(np.clip(np.sqrt(max(reach ** 2 - np.pi ** 2, 0.0)), 6.0, 30.0))


def preprocess_with_u(f: Signal, d: MeasurementDesign, A_max: float, N: int = 64, t=None,
                      beta1: Optional[float] = None, margin_fraction: float = 0.05,
                      scales: Sequence[float] = (2.0, 4.0, 8.0)) -> Tuple[Tone, RecoveryResult]:
    """Recover f from intensities of f + u, where u = A_u·sin(β₁π(t - t0)) is known.

    The scales are tried in order until every block sample of f + u clears
    margin_fraction·A_max; the known u then fixes the global unit factor.

    Args:
        f: Signal whose declared norm is at most A_max
        d: Measurement design
        A_max: Declared bound on f
        N: Half-width of the stitched sample range
        t: Output times, [-5, 5] by default
        beta1: Band of u, between the signal band and 1
        margin_fraction: Required clearance of f + u as a fraction of A_max
        scales: Candidate A_u/A_max ratios

    Returns:
        The tone u and the RecoveryResult of f itself, with u_scale, beta1, t0 and theta in extras
    """
    if A_max <= 0:
        raise InvalidParams(f"A_max must be positive, got {A_max}")
    _check_band(f, d)
    band = f.band_edge / np.pi
    beta1 = beta1 if beta1 is not None else 0.5 * (band + 1.0)
    if not band < beta1 < 1:
        raise InvalidParams(f"need signal band {band:.3f} < β₁ = {beta1} < 1")
    t = np.linspace(-5.0, 5.0, 1001) if t is None else np.asarray(t, dtype=float)

    n_range = block_range(d, N)
    f_values = block_values(f, d, n_range)
    points = d.block_points(np.arange(n_range[0], n_range[1] + 1))
    t0, _ = _best_shift(points.ravel(), beta1)
    margin = margin_fraction * A_max

    for factor in scales:
        u = sine_tone(factor * A_max, beta1, t0)
        v_values = f_values + np.asarray(u.evaluate(points))
        if np.min(np.abs(v_values)) > margin:
            break
    else:
        raise UScalingFailed(
            f"no scale in {tuple(scales)}·A_max lifts every sample of f + u above {margin:.3e}",
            context={"A_max": A_max, "scales": list(scales), "margin": margin},
        )

    amplitudes, blocks, stitched = _lift_and_stitch(v_values, d, N)
    indices, v_samples = _centered(stitched, N)
    u_samples = np.asarray(u.evaluate(indices.astype(float)))
    # u pins the unit scalar left free by the intensities
    window = np.kaiser(indices.size, _kaiser_beta((beta1 - band) * np.pi, indices.size))
    theta = float(np.angle(np.sum(window * u_samples * np.conj(v_samples))))
    f_samples = np.exp(1j * theta) * v_samples - u_samples
    recovered = series_from_samples(f_samples, _kernel_for(d, N), indices, t)

    logger.info(f"Preprocessed recovery with A_u = {factor}·A_max, β₁ = {beta1:.3f}, θ = {theta:.3e}")
    f_stitched = StitchedSamples(indices.astype(float), f_samples, stitched.block_indices)
    result = RecoveryResult(t, np.asarray(recovered), f_stitched, blocks, amplitudes, d.sampling_rate,
                            max(b.residual for b in blocks),
                            {"u_scale": factor, "beta1": beta1, "t0": t0, "theta": theta})
    return u, result
