"""Signal Core - frequency-domain representation of bandlimited signals.

A signal is stored through its spectrum f̂ sampled on a uniform, symmetric
grid over [-σ, σ] together with quadrature weights. Every time-domain value
is a quadrature of f̂(ω)·e^{iωt}/(2π), so the spectrum is the single source
of truth for a signal.

Demonstrates:
- Immutable dataclass types with validation in __post_init__
- Vectorized evaluation over (t, ω) matrices, chunked to bound memory
- Seeded, reproducible test-signal families
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
from loguru import logger

from services.error_handler import GridMismatch, InvalidParams, NonFiniteResult

DEFAULT_GRID_POINTS = 4097
MAX_IMAG_PART = 10.0
_EVAL_CHUNK = 256


class Quadrature(Enum):
    """Quadrature rules for spectra on uniform grids"""
    TRAPEZOID = "trapezoid"
    SIMPSON = "simpson"


class SignalFamily(Enum):
    """Test-signal families"""
    TRIG_POLYNOMIAL = "trig_polynomial"
    FEJER = "fejer"
    EDGE_SINGULAR_ALPHA = "edge_singular_alpha"
    SHIFTED_SINC = "shifted_sinc"
    RANDOM_SMOOTH = "random_smooth"


def frequency_grid(band_edge: float, grid_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform grid over [-band_edge, band_edge], exactly antisymmetric."""
    if band_edge <= 0:
        raise InvalidParams(f"band_edge must be positive, got {band_edge}")
    if grid_points < 3:
        raise InvalidParams(f"grid_points must be >= 3, got {grid_points}")
    grid = band_edge * np.linspace(-1.0, 1.0, grid_points)
    return 0.5 * (grid - grid[::-1])


def quadrature_weights(grid: np.ndarray, rule: Quadrature) -> np.ndarray:
    """Weights of a composite rule on a uniform grid; they sum to the grid span."""
    n = grid.size
    step = (grid[-1] - grid[0]) / (n - 1)
    if rule is Quadrature.TRAPEZOID:
        weights = np.full(n, step)
        weights[0] = weights[-1] = 0.5 * step
        return weights
    if n % 2 == 0:
        raise InvalidParams("Simpson quadrature needs an odd number of grid points", context={"grid_points": n})
    weights = np.full(n, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    return weights * step / 3.0


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Samples of f̂ on a uniform grid over [-band_edge, band_edge]."""

    band_edge: float
    grid: np.ndarray
    values: np.ndarray
    quadrature: Quadrature = Quadrature.TRAPEZOID
    family: str = "custom"
    seed: Optional[int] = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        sigma = float(self.band_edge)
        tol = 1e-12 * max(sigma, 1.0)

        if grid.ndim != 1 or values.shape != grid.shape:
            raise InvalidParams("grid and values must be 1-D arrays of equal length",
                                context={"grid": grid.shape, "values": values.shape})
        if grid.size < 3:
            raise InvalidParams("a spectrum needs at least 3 grid points")
        if np.any(np.diff(grid) <= 0):
            raise InvalidParams("spectrum grid must be strictly increasing")
        if abs(grid[0] + sigma) > tol or abs(grid[-1] - sigma) > tol:
            raise InvalidParams("spectrum grid must cover [-band_edge, band_edge]",
                                context={"band_edge": sigma, "first": grid[0], "last": grid[-1]})
        if np.max(np.abs(grid + grid[::-1])) > tol:
            raise InvalidParams("spectrum grid must be symmetric about 0")
        if not np.all(np.isfinite(values)):
            raise NonFiniteResult("spectrum values must be finite")

        quadrature = Quadrature(self.quadrature)
        object.__setattr__(self, "band_edge", sigma)
        object.__setattr__(self, "grid", _frozen(grid))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "quadrature", quadrature)
        # fails early for Simpson on an even grid
        _ = self.weights

    @cached_property
    def weights(self) -> np.ndarray:
        return _frozen(quadrature_weights(self.grid, self.quadrature))

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def same_grid(self, other: "Spectrum") -> bool:
        return (
            self.band_edge == other.band_edge
            and self.quadrature is other.quadrature
            and self.grid.shape == other.grid.shape
            and np.array_equal(self.grid, other.grid)
        )

    def with_values(self, values: np.ndarray, family: Optional[str] = None) -> "Spectrum":
        return Spectrum(self.band_edge, self.grid, values, self.quadrature,
                        family or self.family, self.seed)

    def metadata(self) -> Dict[str, Any]:
        return {
            "band_edge": self.band_edge,
            "quadrature": self.quadrature.value,
            "family": self.family,
            "seed": self.seed,
        }

    @classmethod
    def from_function(cls, fn, band_edge: float, grid_points: int = DEFAULT_GRID_POINTS,
                      quadrature: Quadrature = Quadrature.TRAPEZOID, family: str = "custom") -> "Spectrum":
        grid = frequency_grid(band_edge, grid_points)
        return cls(band_edge, grid, np.broadcast_to(fn(grid), grid.shape), quadrature, family)


@dataclass(frozen=True, eq=False)
class Tone:
    """Finite sum of exponentials Σ a_j e^{iν_j t}: a bounded signal that is not in PW¹."""

    amplitudes: np.ndarray
    frequencies: np.ndarray
    band_edge: float

    def __post_init__(self):
        amplitudes = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        frequencies = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        if amplitudes.shape != frequencies.shape:
            raise InvalidParams("tone amplitudes and frequencies must match in length")
        if np.any(np.abs(frequencies) > self.band_edge * (1 + 1e-12)):
            raise InvalidParams("tone frequency outside band", context={"band_edge": self.band_edge})
        object.__setattr__(self, "amplitudes", _frozen(amplitudes))
        object.__setattr__(self, "frequencies", _frozen(frequencies))

    @property
    def sup_bound(self) -> float:
        return float(np.sum(np.abs(self.amplitudes)))

    def evaluate(self, t) -> Union[complex, np.ndarray]:
        t_arr = np.asarray(t, dtype=complex)
        _check_strip(t_arr)
        out = np.exp(1j * np.multiply.outer(t_arr.ravel(), self.frequencies)) @ self.amplitudes
        return _shape_like(out, t_arr)


def sine_tone(amplitude: float, beta: float, shift: float = 0.0) -> Tone:
    """amplitude·sin(βπ(t - shift)) as a two-term tone of band βπ."""
    nu = beta * np.pi
    amps = np.array([np.exp(-1j * nu * shift), -np.exp(1j * nu * shift)]) * amplitude / 2j
    return Tone(amps, np.array([nu, -nu]), band_edge=nu)


Signal = Union[Spectrum, Tone]


@dataclass(frozen=True)
class SignalNorm:
    p: float
    value: float

    def __post_init__(self):
        if self.value < 0 or np.isnan(self.value):
            raise NonFiniteResult(f"norm value must be nonnegative, got {self.value}")


def _check_strip(t: np.ndarray) -> None:
    if t.size and np.max(np.abs(t.imag)) > MAX_IMAG_PART:
        raise NonFiniteResult(
            f"evaluation point outside the strip |Im t| <= {MAX_IMAG_PART}",
            context={"max_imag": float(np.max(np.abs(t.imag)))},
        )


def _shape_like(out: np.ndarray, t: np.ndarray):
    if not np.all(np.isfinite(out)):
        raise NonFiniteResult("signal evaluation overflowed")
    if t.ndim == 0:
        return complex(out[0])
    return out.reshape(t.shape)


def eval_signal(f: Signal, t) -> Union[complex, np.ndarray]:
    """Evaluate f(t) = (1/2π)·Σ_j w_j f̂(ω_j) e^{iω_j t} at scalar or array t (complex allowed)."""
    if isinstance(f, Tone):
        return f.evaluate(t)

    t_arr = np.asarray(t, dtype=complex)
    _check_strip(t_arr)
    flat = t_arr.ravel()
    coeffs = f.weights * f.values / (2 * np.pi)
    out = np.empty(flat.size, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, flat.size, _EVAL_CHUNK):
            chunk = flat[start:start + _EVAL_CHUNK]
            out[start:start + _EVAL_CHUNK] = np.exp(1j * np.multiply.outer(chunk, f.grid)) @ coeffs
    return _shape_like(out, t_arr)


def pw_norm(f: Spectrum, p: float) -> SignalNorm:
    """Normalized Paley-Wiener norm ((1/2σ)∫|f̂|^p)^{1/p}; p = inf gives the grid max."""
    p = float(p)
    if np.isnan(p) or p < 1:
        raise InvalidParams(f"p must lie in [1, inf], got {p}")
    magnitude = np.abs(f.values)
    if np.isinf(p):
        return SignalNorm(p, float(magnitude.max()))
    mean = np.sum(f.weights * magnitude ** p) / (2 * f.band_edge)
    return SignalNorm(p, float(mean ** (1.0 / p)))


def sup_bound(f: Spectrum) -> float:
    """(1/2π)∫|f̂|, the PW¹_π bound on sup |f| on the real line."""
    return float(np.sum(f.weights * np.abs(f.values)) / (2 * np.pi))


def inner_product(a: Spectrum, b: Spectrum) -> complex:
    """Normalized frequency-domain inner product (1/2σ)∫ f̂ conj(ĝ)."""
    if not a.same_grid(b):
        raise GridMismatch(
            "inner product needs identical grids and band edges",
            context={"a_band": a.band_edge, "b_band": b.band_edge, "a_points": a.grid.size, "b_points": b.grid.size},
        )
    return complex(np.sum(a.weights * a.values * np.conj(b.values)) / (2 * a.band_edge))


def reproducing_kernel(lam: float, sigma: float, grid_points: int = DEFAULT_GRID_POINTS) -> Spectrum:
    """r_λ(t) = sin(σ(t-λ))/(π(t-λ)), whose spectrum is e^{-iωλ} on [-σ, σ]."""
    if sigma <= 0:
        raise InvalidParams(f"sigma must be positive, got {sigma}")
    grid = frequency_grid(sigma, grid_points)
    return Spectrum(sigma, grid, np.exp(-1j * grid * lam), family=SignalFamily.SHIFTED_SINC.value)


# --- spectrum algebra ----------------------------------------------------------

def scale_spectrum(f: Spectrum, factor: complex) -> Spectrum:
    return f.with_values(f.values * factor)


def add_spectra(a: Spectrum, b: Spectrum, b_factor: complex = 1.0) -> Spectrum:
    if not a.same_grid(b):
        raise GridMismatch("cannot add spectra on different grids")
    return a.with_values(a.values + b_factor * b.values, family="combination")


def modulate(f: Spectrum, shift: float) -> Spectrum:
    """Multiply f̂ by e^{-iω·shift}, i.e. delay f by shift."""
    return f.with_values(f.values * np.exp(-1j * f.grid * shift))


def effective_band(f: Spectrum, rel_tol: float = 1e-12) -> float:
    """Largest |ω| on the grid where |f̂| exceeds rel_tol times its max."""
    magnitude = np.abs(f.values)
    peak = magnitude.max()
    if peak == 0:
        return 0.0
    active = f.grid[magnitude > rel_tol * peak]
    return float(np.max(np.abs(active)))


# --- test families -------------------------------------------------------------

@dataclass(frozen=True)
class TestSignalParams:
    """Recipe for a test signal; random families are deterministic given seed."""

    __test__ = False  # not a pytest class

    family: SignalFamily
    parameters: Mapping[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    band: float = 1.0
    grid_points: int = DEFAULT_GRID_POINTS
    quadrature: Quadrature = Quadrature.TRAPEZOID

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", SignalFamily(self.family))
        except ValueError as e:
            raise InvalidParams(f"unknown signal family: {self.family}") from e
        object.__setattr__(self, "quadrature", Quadrature(self.quadrature))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TestSignalParams":
        if "family" not in data:
            raise InvalidParams("signal recipe is missing 'family'")
        return cls(
            family=data["family"],
            parameters=dict(data.get("parameters", {})),
            seed=data.get("seed"),
            band=float(data.get("band", 1.0)),
            grid_points=int(data.get("grid_points", DEFAULT_GRID_POINTS)),
            quadrature=Quadrature(data.get("quadrature", Quadrature.TRAPEZOID.value)),
        )


def _as_complex(value: Any) -> complex:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    return complex(value)


def _random_coefficients(rng: np.random.Generator, degree: int) -> Dict[int, complex]:
    count = 2 * degree + 1
    raw = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / np.sqrt(2 * count)
    return {k: complex(c) for k, c in zip(range(-degree, degree + 1), raw)}


def _trig_values(grid: np.ndarray, coefficients: Mapping[int, complex]) -> np.ndarray:
    values = np.zeros(grid.size, dtype=complex)
    for k, c in coefficients.items():
        values += c * np.exp(-1j * grid * k)
    return values


def _bump(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


def _coefficients_or_random(params: TestSignalParams, default_degree: int) -> Dict[int, complex]:
    explicit = params.parameters.get("coefficients")
    if explicit is not None:
        return {int(k): _as_complex(v) for k, v in dict(explicit).items()}
    degree = int(params.parameters.get("degree", default_degree))
    if degree < 0:
        raise InvalidParams(f"degree must be >= 0, got {degree}")
    if params.seed is None:
        raise InvalidParams(f"{params.family.value} without explicit coefficients needs a seed")
    return _random_coefficients(np.random.default_rng(params.seed), degree)


def make_test_signal(params: TestSignalParams) -> Spectrum:
    """Build the spectrum of a test signal on [-band·π, band·π].

    Args:
        params: Family, family parameters, seed and band fraction

    Returns:
        Spectrum on the default grid of the requested band
    """
    if not 0 < params.band <= 1:
        raise InvalidParams(f"band fraction must lie in (0, 1], got {params.band}")
    sigma = params.band * np.pi
    grid = frequency_grid(sigma, params.grid_points)
    family = params.family
    p = params.parameters

    if family is SignalFamily.TRIG_POLYNOMIAL:
        values = _trig_values(grid, _coefficients_or_random(params, default_degree=4))
    elif family is SignalFamily.FEJER:
        values = float(p.get("scale", 1.0)) * (1.0 - np.abs(grid) / sigma)
    elif family is SignalFamily.EDGE_SINGULAR_ALPHA:
        alpha = float(p.get("alpha", 0.5))
        if not 0 < alpha < 1:
            raise InvalidParams(f"edge_singular_alpha needs 0 < alpha < 1, got {alpha}")
        # endpoint nodes take the value half a step inward
        half_step = 0.5 * (grid[1] - grid[0])
        distance = np.maximum(1.0 - np.abs(grid) / sigma, half_step / sigma)
        values = float(p.get("scale", 1.0)) * distance ** (-alpha)
    elif family is SignalFamily.SHIFTED_SINC:
        values = np.exp(-1j * grid * float(p.get("shift", 0.0)))
    elif family is SignalFamily.RANDOM_SMOOTH:
        coefficients = _coefficients_or_random(params, default_degree=3)
        values = _bump(grid / sigma) * _trig_values(grid, coefficients)
    else:  # pragma: no cover - enum is exhaustive
        raise InvalidParams(f"unsupported family {family}")

    logger.debug(f"Built {family.value} spectrum: band={params.band}, points={params.grid_points}, seed={params.seed}")
    return Spectrum(sigma, grid, values, params.quadrature, family.value, params.seed)


def in_pw2(params: TestSignalParams) -> bool:
    """Whether the family lies in PW²; edge_singular_alpha with α >= 1/2 is in PW¹ only."""
    if params.family is SignalFamily.EDGE_SINGULAR_ALPHA:
        return float(params.parameters.get("alpha", 0.5)) < 0.5
    return True
