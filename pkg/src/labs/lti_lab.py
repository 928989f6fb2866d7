"""LTI Lab - stable LTI systems as frequency multipliers and their digital implementations.

A system H acts by (Hf)(t) = (1/2π)∫ f̂(ω)ĥ(ω)e^{iωt} dω. Digital
implementations either drive the kernels ψ_n = Hφ_n with point samples
f(λ_n), or drive a midpoint Riemann sum of the analog integral with
frequency-bin measurements (1/2π)∫_{bin} f̂.

Demonstrates:
- Analytic spectra of sampling kernels via divided differences
- Write-once kernel-spectrum cache shared across worker threads
- Antiderivatives of piecewise-linear interpolants for bin integrals
"""

import threading
import weakref
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from labs.sampling_series import GeneratingForm, KernelFamily
from labs.signal_core import (
    DEFAULT_GRID_POINTS,
    Quadrature,
    Spectrum,
    eval_signal,
    frequency_grid,
    quadrature_weights,
)
from services.error_handler import GridMismatch, GridTooCoarse, IndexOutOfRange, InvalidParams, NonFiniteResult


class Smoothness(Enum):
    SMOOTH = "smooth"
    DISCONTINUOUS = "discontinuous"


Response = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Frequency response ĥ sampled on a symmetric grid over [-π, π]."""

    grid: np.ndarray
    values: np.ndarray
    smoothness: Smoothness = Smoothness.SMOOTH
    name: str = "custom"
    response: Optional[Response] = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if grid.shape != values.shape or grid.ndim != 1:
            raise InvalidParams("transfer grid and values must be matching 1-D arrays")
        if not np.all(np.isfinite(values)):
            raise NonFiniteResult("transfer function must be bounded (finite on the grid)")
        for name, array in (("grid", grid), ("values", values)):
            array = array.copy()
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, "smoothness", Smoothness(self.smoothness))

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.values == 1))

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0))

    def at(self, omega) -> np.ndarray:
        """ĥ at arbitrary frequencies: the analytic response when known, else linear interpolation."""
        omega = np.asarray(omega, dtype=float)
        if self.response is not None:
            return np.broadcast_to(np.asarray(self.response(omega), dtype=complex), omega.shape).copy()
        return np.interp(omega, self.grid, self.values.real) + 1j * np.interp(omega, self.grid, self.values.imag)

    def resample(self, grid: np.ndarray) -> "TransferFunction":
        return TransferFunction(grid, self.at(grid), self.smoothness, self.name, self.response)

    def metadata(self) -> Dict[str, object]:
        return {"name": self.name, "smoothness": self.smoothness.value, "sup_norm": self.sup_norm}


def _default_grid(grid: Optional[np.ndarray]) -> np.ndarray:
    return frequency_grid(np.pi, DEFAULT_GRID_POINTS) if grid is None else np.asarray(grid, dtype=float)


def _from_response(response: Response, grid, smoothness: Smoothness, name: str) -> TransferFunction:
    grid = _default_grid(grid)
    values = np.broadcast_to(np.asarray(response(grid), dtype=complex), grid.shape)
    return TransferFunction(grid, values, smoothness, name, response)


def identity_transfer(grid: Optional[np.ndarray] = None) -> TransferFunction:
    return _from_response(lambda w: np.ones_like(w, dtype=complex), grid, Smoothness.SMOOTH, "identity")


def zero_transfer(grid: Optional[np.ndarray] = None) -> TransferFunction:
    return _from_response(lambda w: np.zeros_like(w, dtype=complex), grid, Smoothness.SMOOTH, "zero")


def delay_transfer(delay: float, grid: Optional[np.ndarray] = None) -> TransferFunction:
    return _from_response(lambda w: np.exp(-1j * w * delay), grid, Smoothness.SMOOTH, f"delay({delay})")


def trig_polynomial_transfer(coefficients: Dict[int, complex], grid: Optional[np.ndarray] = None) -> TransferFunction:
    """ĥ(ω) = Σ_k c_k e^{-iωk}: a finite impulse response filter."""
    items = {int(k): complex(c) for k, c in coefficients.items()}

    def response(w):
        out = np.zeros(np.shape(w), dtype=complex)
        for k, c in items.items():
            out += c * np.exp(-1j * w * k)
        return out

    return _from_response(response, grid, Smoothness.SMOOTH, "trig_polynomial")


def hilbert_transfer(grid: Optional[np.ndarray] = None) -> TransferFunction:
    """ĥ(ω) = -i·sgn(ω) with ĥ(0) = 0."""
    return _from_response(lambda w: -1j * np.sign(w), grid, Smoothness.DISCONTINUOUS, "hilbert")


def apply_lti(h: TransferFunction, f: Spectrum, t) -> Union[complex, np.ndarray]:
    """Analog output (Hf)(t) by quadrature on the shared grid."""
    if h.grid.shape != f.grid.shape or not np.array_equal(h.grid, f.grid):
        raise GridMismatch(
            "transfer function and signal must share a frequency grid",
            context={"transfer_points": h.grid.size, "signal_points": f.grid.size},
        )
    return eval_signal(f.with_values(f.values * h.values), t)


# --- kernel spectra ---------------------------------------------------------------

def _cumulative_trapezoid(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    steps = np.diff(grid)
    out = np.zeros(values.shape, dtype=complex)
    out[..., 1:] = np.cumsum(0.5 * steps * (values[..., 1:] + values[..., :-1]), axis=-1)
    return out


def _interp_complex(x: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    return np.interp(x, xp, fp.real) + 1j * np.interp(x, xp, fp.imag)


def _sine_divided_difference(omega: np.ndarray, lam: complex) -> np.ndarray:
    """Spectrum of (sin(πz) - sin(πλ))/(z - λ) on [-π, π]."""
    base = np.pi * np.exp(-1j * omega * lam)
    out = base * np.exp(1j * np.pi * np.sign(omega) * lam)
    zero = omega == 0
    out[zero] = np.pi * np.cos(np.pi * lam)
    return out


def _perturbation_divided_difference(omega: np.ndarray, lam: complex, g: Spectrum) -> np.ndarray:
    """Spectrum of (g(z) - g(λ))/(z - λ): i·e^{-iωλ}∫_ω^σ ĝe^{iνλ} for ω > 0, mirrored for ω < 0."""
    integrand = g.values * np.exp(1j * g.grid * lam)
    running = _cumulative_trapezoid(g.grid, integrand)
    total = running[-1]
    below = _interp_complex(np.clip(omega, g.grid[0], g.grid[-1]), g.grid, running)
    below = np.where(omega < g.grid[0], 0.0, below)
    below = np.where(omega > g.grid[-1], total, below)
    phase = np.exp(-1j * omega * lam)
    out = np.where(omega > 0, 1j * phase * (total - below), -1j * phase * below)
    zero = omega == 0
    out[zero] = 0.5j * (total - 2 * below[zero])
    return out


class KernelSpectrumCache:
    """Spectra φ̂_n of the kernels of one family on one frequency grid, computed once per n.

    The cache only holds a weak reference to its family, so dropping the family
    also drops every cache built for it.
    """

    def __init__(self, family: KernelFamily, grid: np.ndarray):
        self._family = weakref.ref(family)
        self.grid = np.asarray(grid, dtype=float)
        self._spectra: Dict[int, np.ndarray] = {}
        self._lock = threading.Lock()
        logger.info(f"Initialized kernel-spectrum cache ({family.generating.form.value}, {self.grid.size} points)")

    @property
    def family(self) -> KernelFamily:
        family = self._family()
        if family is None:
            raise InvalidParams("the kernel family of this spectrum cache no longer exists")
        return family

    def _compute(self, n: int) -> np.ndarray:
        gen = self.family.generating
        lam = complex(self.family.zero_set.point(n))
        if gen.form is GeneratingForm.TRUNCATED_PRODUCT:
            return self._window_quadrature(n, lam)
        deriv = self.family.derivatives[n - self.family.zero_set.first_index]
        sine_part = _sine_divided_difference(self.grid, lam)
        if gen.form is GeneratingForm.CLOSED_SINE:
            return gen.scale * sine_part / deriv
        g_part = _perturbation_divided_difference(self.grid, lam, gen.perturbation)
        return gen.scale * (gen.amplitude * sine_part - g_part) / deriv

    def _window_quadrature(self, n: int, lam: complex) -> np.ndarray:
        half_width = max(8 * abs(n), 64)
        t = np.arange(-half_width, half_width + 0.0625, 0.125) + lam.real
        kernel = self.family.matrix([n], t)[:, 0]
        weights = np.full(t.size, 0.125)
        weights[0] = weights[-1] = 0.0625
        return np.exp(-1j * np.multiply.outer(self.grid, t)) @ (weights * kernel)

    def spectrum(self, n: int) -> np.ndarray:
        cached = self._spectra.get(n)
        if cached is not None:
            return cached
        with self._lock:
            if n not in self._spectra:
                values = self._compute(n)
                values.setflags(write=False)
                self._spectra[n] = values
            return self._spectra[n]

    def spectra(self, indices: Sequence[int]) -> np.ndarray:
        return np.stack([self.spectrum(int(n)) for n in indices])


_CACHES: "weakref.WeakKeyDictionary[KernelFamily, Dict[Tuple[float, int], KernelSpectrumCache]]" = (
    weakref.WeakKeyDictionary()
)
_CACHES_LOCK = threading.Lock()


def kernel_spectra(family: KernelFamily, grid: np.ndarray) -> KernelSpectrumCache:
    """Shared spectrum cache for (family, grid); entries live as long as the family."""
    key = (float(grid[-1]), int(grid.size))
    with _CACHES_LOCK:
        per_family = _CACHES.setdefault(family, {})
        cache = per_family.get(key)
        if cache is None:
            cache = KernelSpectrumCache(family, grid)
            per_family[key] = cache
    return cache


def clear_kernel_spectra() -> None:
    with _CACHES_LOCK:
        _CACHES.clear()


def _psi_by_quadrature(h: TransferFunction, k: KernelFamily, indices: np.ndarray, t: np.ndarray) -> np.ndarray:
    k.zero_set.select(indices)
    spectra = kernel_spectra(k, h.grid).spectra(indices)
    weights = quadrature_weights(h.grid, Quadrature.TRAPEZOID)
    weighted = spectra * (weights * h.values / (2 * np.pi))[None, :]
    return np.exp(1j * np.multiply.outer(t, h.grid)) @ weighted.T


def psi_kernels(h: TransferFunction, k: KernelFamily, indices: Sequence[int], t) -> np.ndarray:
    """(Hφ_n)(t) as a (len(t), len(indices)) array.

    The identity and zero responses skip the kernel-spectrum quadrature.
    """
    indices = np.asarray(indices, dtype=int)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if h.is_identity:
        return k.matrix(indices, t)
    if h.is_zero:
        return np.zeros((t.size, indices.size), dtype=complex)
    return _psi_by_quadrature(h, k, indices, t)


def digital_lti_point(h: TransferFunction, k: KernelFamily, f, N: int, t) -> Union[complex, np.ndarray]:
    """(H_N f)(t) = Σ_{|n|≤N} f(λ_n)·(Hφ_n)(t)."""
    k.check_range(N)
    indices = np.arange(-N, N + 1)
    samples = eval_signal(f, k.zero_set.select(indices))
    t_arr = np.asarray(t, dtype=float)
    out = psi_kernels(h, k, indices, t_arr.ravel()) @ samples
    return complex(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)


# --- generalized measurements ----------------------------------------------------

class MeasurementKind(Enum):
    POINT_EVAL = "point_eval"
    FREQ_BIN = "freq_bin"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class MeasurementFunctionalSet:
    """Bounded functionals γ_n(f) = ⟨f, s_n⟩ with ‖ŝ_n‖_∞ <= bound."""

    kind: MeasurementKind
    bound: float
    sampling_set: Optional[object] = None
    bins: int = 0
    band_edge: float = np.pi
    custom_grid: Optional[np.ndarray] = None
    custom_spectra: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        if self.kind is MeasurementKind.FREQ_BIN:
            return self.bins
        if self.kind is MeasurementKind.CUSTOM:
            return int(self.custom_spectra.shape[0])
        return int(self.sampling_set.points.size)

    @property
    def bin_edges(self) -> np.ndarray:
        return np.linspace(-self.band_edge, self.band_edge, self.bins + 1)

    @property
    def bin_midpoints(self) -> np.ndarray:
        edges = self.bin_edges
        return 0.5 * (edges[1:] + edges[:-1])


def point_eval_functionals(sampling_set) -> MeasurementFunctionalSet:
    """γ_n(f) = f(λ_n) = ⟨f, r_{λ_n}⟩, whose spectra have modulus one."""
    return MeasurementFunctionalSet(MeasurementKind.POINT_EVAL, 1.0, sampling_set=sampling_set)


def freq_bin_functionals(bins: int, band_edge: float = np.pi) -> MeasurementFunctionalSet:
    """γ_n(f) = (1/2π)∫_{bin n} f̂: ŝ_n is the indicator of bin n."""
    if bins < 1:
        raise InvalidParams(f"bin count must be >= 1, got {bins}")
    return MeasurementFunctionalSet(MeasurementKind.FREQ_BIN, 1.0, bins=int(bins), band_edge=float(band_edge))


def custom_functionals(grid: np.ndarray, spectra: np.ndarray) -> MeasurementFunctionalSet:
    spectra = np.atleast_2d(np.asarray(spectra, dtype=complex))
    if spectra.shape[1] != np.size(grid):
        raise InvalidParams("custom measurement spectra must live on the given grid")
    bound = float(np.max(np.abs(spectra)))
    return MeasurementFunctionalSet(MeasurementKind.CUSTOM, bound,
                                    custom_grid=np.asarray(grid, dtype=float), custom_spectra=spectra)


def _antiderivative(f: Spectrum, omega: np.ndarray) -> np.ndarray:
    """∫_{-σ}^{ω} of the piecewise-linear interpolant of f̂, constant outside the grid."""
    grid, values = f.grid, f.values
    nodes = _cumulative_trapezoid(grid, values)
    clipped = np.clip(omega, grid[0], grid[-1])
    j = np.clip(np.searchsorted(grid, clipped, side="right") - 1, 0, grid.size - 2)
    step = grid[j + 1] - grid[j]
    s = clipped - grid[j]
    slope = (values[j + 1] - values[j]) / step
    return nodes[j] + values[j] * s + 0.5 * slope * s ** 2


def bin_measurements(m: MeasurementFunctionalSet, f: Spectrum) -> np.ndarray:
    antiderivative = _antiderivative(f, m.bin_edges)
    return np.diff(antiderivative) / (2 * np.pi)


def generalized_measure(m: MeasurementFunctionalSet, f: Spectrum, n: int) -> complex:
    """γ_n(f) for the n-th functional of the set."""
    if m.kind is MeasurementKind.POINT_EVAL:
        return complex(eval_signal(f, m.sampling_set.point(n)))
    if not 0 <= n < m.count:
        raise IndexOutOfRange(f"functional index {n} outside [0, {m.count - 1}]", context={"n": n})
    if m.kind is MeasurementKind.FREQ_BIN:
        edges = m.bin_edges[n:n + 2]
        return complex(np.diff(_antiderivative(f, edges))[0] / (2 * np.pi))
    if not np.array_equal(m.custom_grid, f.grid):
        raise GridMismatch("custom measurement spectra and signal must share a grid")
    return complex(np.sum(f.weights * f.values * np.conj(m.custom_spectra[n])) / (2 * np.pi))


def digital_lti_generalized(h: TransferFunction, m: MeasurementFunctionalSet, f: Spectrum, t) -> Union[complex, np.ndarray]:
    """Σ_n γ_n(f)·ĥ(ω_n)·e^{iω_n t} over bin midpoints ω_n: a midpoint Riemann sum of (Hf)(t)."""
    if m.kind is not MeasurementKind.FREQ_BIN:
        raise InvalidParams("the Riemann-sum implementation needs frequency-bin measurements")
    if m.bins < 2:
        raise InvalidParams(f"need at least 2 bins, got {m.bins}")
    gamma = bin_measurements(m, f)
    mid = m.bin_midpoints
    t_arr = np.asarray(t, dtype=float)
    out = np.exp(1j * np.multiply.outer(t_arr.ravel(), mid)) @ (gamma * h.at(mid))
    return complex(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)


def functional_norm_estimate(h: TransferFunction, k: KernelFamily, N: int, t: float, beta: float,
                             omega_points: Optional[int] = None) -> float:
    """max over ω ∈ [-βπ, βπ] of |Σ_{|n|≤N} e^{iωλ_n}(Hφ_n)(t)|.

    Args:
        h: Transfer function of the LTI system
        k: Kernel family over Λ
        N: Truncation degree
        t: Evaluation time
        beta: Band fraction of the input space, in (0, 1]
        omega_points: Frequency grid size; must resolve the scale 1/N

    Returns:
        The grid estimate of the norm of f -> (H_N f)(t) on PW¹ of band βπ
    """
    if not 0 < beta <= 1:
        raise InvalidParams(f"beta must lie in (0, 1], got {beta}")
    required = int(np.ceil(16 * beta * max(N, 1))) + 1
    if omega_points is None:
        omega_points = max(2 * required - 1, 257)
    elif omega_points < required:
        raise GridTooCoarse(
            f"{omega_points} frequency points cannot resolve the scale 1/N for N = {N}",
            context={"N": N, "omega_points": omega_points, "required": required},
        )
    k.check_range(N)
    indices = np.arange(-N, N + 1)
    coefficients = psi_kernels(h, k, indices, [t])[0]
    lam = k.zero_set.select(indices)
    omega = np.linspace(-beta * np.pi, beta * np.pi, omega_points)
    return float(np.max(np.abs(np.exp(1j * np.multiply.outer(omega, lam)) @ coefficients)))


def error_curve(values: Sequence[float], truth: complex) -> List[float]:
    return [float(abs(v - truth)) for v in values]
