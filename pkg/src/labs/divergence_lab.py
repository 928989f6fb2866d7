"""Divergence Lab - convergence and divergence diagnostics for sampling series.

Covers operator-norm growth of the Shannon series and of sine-type series at
the critical band, oscillation probes, local, global and edge-strip error
profiles, and the Walsh partial-sum contrast, where dyadic projections have
norm exactly one.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from labs.lti_lab import functional_norm_estimate, identity_transfer
from labs.sampling_series import KernelFamily, nonuniform_series, shannon_series
from labs.signal_core import Signal, eval_signal
from services.error_handler import GridTooCoarse, InvalidParams, NonFiniteResult

DEFAULT_T_STEP = 1.0 / 16.0
_ROW_CHUNK = 256
_MC_CHUNK = 1_000_000


@dataclass(frozen=True, eq=False)
class NormCurve:
    ns: np.ndarray
    values: np.ndarray
    grids: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        ns = np.asarray(self.ns, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if ns.shape != values.shape or ns.ndim != 1:
            raise InvalidParams("curve needs matching 1-D N and value arrays")
        if np.any(np.diff(ns) <= 0):
            raise InvalidParams("curve N values must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise NonFiniteResult("curve values must be finite")
        object.__setattr__(self, "ns", ns)
        object.__setattr__(self, "values", values)

    def value_at(self, N: int) -> float:
        return float(self.values[np.searchsorted(self.ns, N)])


@dataclass(frozen=True)
class ErrorProfile:
    N: int
    local_sup: float
    global_sup: float
    argmax_t: float


@dataclass(frozen=True)
class LogFit:
    slope: float
    intercept: float
    r_squared: float


# --- operator norm -----------------------------------------------------------------

def _fft_size(N: int, omega_points: Optional[int]) -> int:
    required = 16 * max(N, 1)
    if omega_points is None:
        return int(2 ** np.ceil(np.log2(required)))
    if omega_points < required:
        raise GridTooCoarse(
            f"omega step 2π/{omega_points} is coarser than π/(8N) for N = {N}",
            context={"N": N, "omega_points": omega_points, "required": required},
        )
    return int(omega_points)


def shannon_kernel_sup(N: int, t, omega_points: Optional[int] = None) -> np.ndarray:
    """max over ω of |Σ_{|n|≤N} e^{iωn}·sinc(t - n)| at each t, via a zero-padded FFT."""
    if N < 0:
        raise InvalidParams(f"N must be >= 0, got {N}")
    size = _fft_size(N, omega_points)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = np.arange(-N, N + 1)
    out = np.empty(t.size)
    for start in range(0, t.size, _ROW_CHUNK):
        rows = np.sinc(t[start:start + _ROW_CHUNK, None] - n[None, :])
        out[start:start + _ROW_CHUNK] = np.abs(np.fft.fft(rows, n=size, axis=1)).max(axis=1)
    return out


def shannon_norm_estimate(N: int, t_grid: Optional[np.ndarray] = None, omega_points: Optional[int] = None) -> float:
    """Grid estimate of the PW¹ -> B^∞ norm of S_N.

    The integrand is even in t, so the default t-grid is [0, N+2] with step 1/16;
    halving the step or doubling omega_points refines the grid monotonically.
    """
    if t_grid is None:
        t_grid = np.arange(0.0, N + 2 + DEFAULT_T_STEP / 2, DEFAULT_T_STEP)
    value = float(shannon_kernel_sup(N, t_grid, omega_points).max())
    logger.debug(f"||S_{N}|| estimate {value:.6f} on {np.size(t_grid)} t-points")
    return value


def shannon_norm_curve(ns: Sequence[int], t_step: float = DEFAULT_T_STEP, oversample: int = 1) -> NormCurve:
    values = []
    for N in ns:
        grid = np.arange(0.0, N + 2 + t_step / 2, t_step)
        size = _fft_size(N, None) * int(oversample)
        values.append(shannon_norm_estimate(int(N), grid, size))
    return NormCurve(np.asarray(ns), np.asarray(values),
                     {"t_span": "[0, N+2]", "t_step": t_step, "omega_step": f"2pi/(16N*{oversample})"})


def fit_log_growth(curve: NormCurve) -> LogFit:
    """Least-squares fit value ≈ slope·log N + intercept."""
    mask = curve.ns > 0
    x = np.log(curve.ns[mask])
    y = curve.values[mask]
    if x.size < 2:
        raise InvalidParams("log fit needs at least two positive N values")
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r_squared = 1.0 - np.sum(residual ** 2) / total if total > 0 else 1.0
    return LogFit(float(slope), float(intercept), float(r_squared))


def sampling_norm_curve(family: KernelFamily, ns: Sequence[int], beta: float = 1.0,
                        offset: float = 0.5) -> NormCurve:
    """Norm of the point functional f -> (A_N f)(N + offset) on PW^β, for each N.

    With beta = 1 a sine-type set behaves like the integers and the curve grows
    like log N. Any beta < 1 leaves a bounded curve.
    """
    h = identity_transfer()
    values = [functional_norm_estimate(h, family, int(N), N + offset, beta) for N in ns]
    logger.info(f"Sampling norm curve (beta={beta}): " + ", ".join(f"{v:.4f}" for v in values))
    return NormCurve(np.asarray(ns), np.asarray(values), {"t": f"N+{offset}", "beta": beta})


# --- probes and profiles -----------------------------------------------------------

def oscillation_probe(f: Signal, N: int, window: float, step: float = 1.0 / 32.0) -> Tuple[float, float]:
    """Grid max and min of Re (S_N f)(t) over [-window, window]."""
    if window < N + 2:
        raise InvalidParams(f"window {window} must be at least N + 2 = {N + 2}")
    t = np.arange(-window, window + step / 2, step)
    values = np.real(shannon_series(f, N, t))
    return float(values.max()), float(values.min())


SeriesOperator = Union[str, KernelFamily]


def _series(f: Signal, series: SeriesOperator, N: int, t: np.ndarray) -> np.ndarray:
    if isinstance(series, KernelFamily):
        return nonuniform_series(f, series, N, t)
    if series == "shannon":
        return shannon_series(f, N, t)
    raise InvalidParams(f"unknown series operator {series!r}")


def error_profile(f: Signal, series: SeriesOperator, N: int, T: float, window: float,
                  step: float = 1.0 / 32.0) -> ErrorProfile:
    """Sup errors of the truncated series on [-T, T] and on [-window, window].

    The local grid is a subset of the global one, so local_sup <= global_sup.

    Args:
        f: Signal whose samples feed the series
        series: "shannon" or a non-uniform kernel family
        N: Truncation degree
        T: Half-width of the local interval
        window: Half-width of the global interval; use at least N + 2 to reach past the samples
        step: Grid step

    Returns:
        ErrorProfile with both sups and the global argmax
    """
    if T <= 0 or window < T:
        raise InvalidParams(f"need 0 < T <= window, got T = {T}, window = {window}")
    t = np.arange(-window, window + step / 2, step)
    t = np.union1d(t, [-T, T])
    error = np.abs(eval_signal(f, t) - _series(f, series, N, t))
    local = np.abs(t) <= T
    k = int(np.argmax(error))
    return ErrorProfile(int(N), float(error[local].max()), float(error[k]), float(t[k]))


def edge_error(f: Signal, series: SeriesOperator, N: int, width: float = 1.0,
               step: float = 1.0 / 32.0) -> Tuple[float, float]:
    """Sup error of the truncated series on the edge strips N <= |t| <= N + width.

    Args:
        f: Signal whose samples feed the series
        series: "shannon" or a non-uniform kernel family
        N: Truncation degree
        width: Strip width beyond the last sample
        step: Grid step inside the strips

    Returns:
        (sup error, t where it is attained)
    """
    if width <= 0 or step <= 0:
        raise InvalidParams(f"width and step must be positive, got {width} and {step}")
    right = np.arange(N, N + width + step / 2, step)
    t = np.concatenate([-right[::-1], right])
    error = np.abs(eval_signal(f, t) - _series(f, series, N, t))
    k = int(np.argmax(error))
    return float(error[k]), float(t[k])


# --- Walsh contrast ---------------------------------------------------------------

def _bit_reverse(values: np.ndarray, bits: int) -> np.ndarray:
    out = np.zeros_like(values)
    for b in range(bits):
        out |= ((values >> b) & 1) << (bits - 1 - b)
    return out


def _walsh_dirichlet(N: int, interval_index: np.ndarray, bits: int) -> np.ndarray:
    """D_N = Σ_{n<N} w_n on the dyadic intervals [j/2^bits, (j+1)/2^bits), Paley order."""
    digits = _bit_reverse(interval_index, bits)
    n = np.arange(N)
    overlap = n[:, None] & digits[None, :]
    parity = np.zeros_like(overlap)
    for b in range(bits):
        parity ^= (overlap >> b) & 1
    return np.sum(1 - 2 * parity, axis=0)


def _dyadic_bits(N: int) -> int:
    if N < 1:
        raise InvalidParams(f"N must be >= 1, got {N}")
    return int(N - 1).bit_length()


def walsh_projection_norm(N: int) -> float:
    """Exact L¹([0,1]) norm of the Walsh-Dirichlet kernel, the norm of the N-term projection."""
    bits = _dyadic_bits(N)
    kernel = _walsh_dirichlet(N, np.arange(2 ** bits), bits)
    return float(np.sum(np.abs(kernel)) / 2 ** bits)


def walsh_projection_norm_mc(N: int, samples: int = 200_000, seed: int = 0) -> float:
    """Monte-Carlo estimate of the same L¹ norm from uniform points in [0, 1)."""
    bits = _dyadic_bits(N)
    rng = np.random.default_rng(seed)
    counts = np.zeros(2 ** bits, dtype=np.int64)
    for start in range(0, samples, _MC_CHUNK):
        x = rng.random(min(_MC_CHUNK, samples - start))
        counts += np.bincount(np.floor(x * 2 ** bits).astype(np.int64), minlength=2 ** bits)
    kernel = _walsh_dirichlet(N, np.arange(2 ** bits), bits)
    return float(np.sum(np.abs(kernel) * counts) / samples)


def walsh_norm_table(max_n: int) -> np.ndarray:
    return np.array([walsh_projection_norm(N) for N in range(1, max_n + 1)])
