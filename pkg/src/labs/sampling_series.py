"""Sampling Series - uniform and non-uniform reconstruction operators.

Generating functions vanish exactly on a sampling set Λ = {λ_n}. The
Lagrange-type kernels φ_n(z) = φ(z)/(φ'(λ_n)(z - λ_n)) built from them give
the truncated series Σ_{|n|≤N} f(λ_n)·φ_n(t). For Λ = ℤ with φ = sin(πz)
this is the Shannon series.

Demonstrates:
- Vectorized bracketed bisection refined by Newton steps
- Frozen dataclasses with write-once cached derivatives
- Removable singularities handled by explicit limit values
"""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from labs.signal_core import Signal, Spectrum, eval_signal, pw_norm, sup_bound
from services.error_handler import (
    BracketFailure,
    IndexOutOfRange,
    InvalidParams,
    NonSimpleZero,
    RadiusTooSmall,
)

SINGULARITY_TOL = 1e-8
NEWTON_TOL = 1e-13
MAX_NEWTON_STEPS = 8
DIFF_STEP = 1e-5
PRODUCT_TOL = 1e-3


class Provenance(Enum):
    INTEGERS = "integers"
    SINE_TYPE_ZEROS = "sine_type_zeros"
    BLOCK_LATTICE = "block_lattice"


class GeneratingForm(Enum):
    CLOSED_SINE = "closed_sine"
    SINE_WAVE_CROSSING = "sine_wave_crossing"
    TRUNCATED_PRODUCT = "truncated_product"


class DerivativeRule(Enum):
    ANALYTIC = "analytic"
    CENTRAL_DIFFERENCE = "central_difference"


@dataclass(frozen=True, eq=False)
class SamplingSet:
    """Ordered points λ_n for n = first_index, ..., first_index + len - 1."""

    points: np.ndarray
    first_index: int = 0
    provenance: Provenance = Provenance.INTEGERS

    def __post_init__(self):
        points = np.atleast_1d(np.asarray(self.points))
        if not np.iscomplexobj(points):
            points = points.astype(float)
        if points.ndim != 1 or points.size == 0:
            raise InvalidParams("a sampling set needs a non-empty 1-D array of points")
        if points.size > 1 and np.any(np.diff(points.real) <= 0):
            raise InvalidParams("sampling points must have strictly increasing real parts")
        provenance = Provenance(self.provenance)
        if provenance is Provenance.INTEGERS:
            expected = np.arange(self.first_index, self.first_index + points.size)
            if not np.array_equal(points, expected):
                raise InvalidParams("integer sampling sets must satisfy λ_n = n")
        points = points.copy()
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "provenance", provenance)
        object.__setattr__(self, "first_index", int(self.first_index))

    @classmethod
    def integers(cls, n_min: int, n_max: int) -> "SamplingSet":
        return cls(np.arange(n_min, n_max + 1, dtype=float), n_min, Provenance.INTEGERS)

    @property
    def last_index(self) -> int:
        return self.first_index + self.points.size - 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.first_index, self.last_index + 1)

    @cached_property
    def separation(self) -> float:
        if self.points.size < 2:
            return float("inf")
        return float(np.min(np.abs(np.diff(self.points))))

    def covers(self, n_min: int, n_max: int) -> bool:
        return self.first_index <= n_min and n_max <= self.last_index

    def point(self, n: int):
        return self.select(np.array([n]))[0]

    def select(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices)
        if indices.size and (indices.min() < self.first_index or indices.max() > self.last_index):
            raise IndexOutOfRange(
                f"indices [{indices.min()}, {indices.max()}] outside [{self.first_index}, {self.last_index}]",
                context={"first_index": self.first_index, "last_index": self.last_index},
            )
        return self.points[indices - self.first_index]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.points)


@dataclass(frozen=True, eq=False)
class GeneratingFunction:
    """Entire function φ vanishing on its zero set.

    closed_sine: scale·sin(πz); sine_wave_crossing: scale·(A·sin(πz) - g(z));
    truncated_product: scale·z^δ·∏_{|λ_n|<R}(1 - z/λ_n).
    """

    form: GeneratingForm
    zero_set: Optional[SamplingSet] = None
    amplitude: float = 1.0
    perturbation: Optional[Spectrum] = None
    radius: Optional[float] = None
    scale: complex = 1.0
    diff_step: float = DIFF_STEP

    def __post_init__(self):
        form = GeneratingForm(self.form)
        object.__setattr__(self, "form", form)
        if form is GeneratingForm.SINE_WAVE_CROSSING and self.perturbation is None:
            raise InvalidParams("sine_wave_crossing needs a perturbation spectrum g")
        if form is GeneratingForm.TRUNCATED_PRODUCT and self.zero_set is None:
            raise InvalidParams("truncated_product needs its zero set")
        if self.scale == 0:
            raise InvalidParams("generating function scale must be nonzero")

    @property
    def derivative_rule(self) -> DerivativeRule:
        if self.form is GeneratingForm.TRUNCATED_PRODUCT:
            return DerivativeRule.CENTRAL_DIFFERENCE
        return DerivativeRule.ANALYTIC

    def with_zero_set(self, zero_set: SamplingSet) -> "GeneratingFunction":
        return GeneratingFunction(self.form, zero_set, self.amplitude, self.perturbation,
                                  self.radius, self.scale, self.diff_step)

    def scaled(self, factor: complex) -> "GeneratingFunction":
        return GeneratingFunction(self.form, self.zero_set, self.amplitude, self.perturbation,
                                  self.radius, self.scale * factor, self.diff_step)


def closed_sine(n_min: int = -512, n_max: int = 512) -> GeneratingFunction:
    return GeneratingFunction(GeneratingForm.CLOSED_SINE, SamplingSet.integers(n_min, n_max))


def sine_wave_crossing(amplitude: float, perturbation: Spectrum) -> GeneratingFunction:
    """A·sin(πz) - g(z); call find_sine_type_zeros to attach its zero set."""
    return GeneratingFunction(GeneratingForm.SINE_WAVE_CROSSING, None, float(amplitude), perturbation)


def truncated_product(zero_set: SamplingSet, radius: Optional[float] = None) -> GeneratingFunction:
    return GeneratingFunction(GeneratingForm.TRUNCATED_PRODUCT, zero_set, radius=radius)


# --- generating function evaluation ---------------------------------------------

def _product_radius(gen: GeneratingFunction, reach: float) -> float:
    """Truncation radius R for the paired product at |z| <= reach.

    Dropping the factors beyond R changes the product by a relative factor of
    about exp(z²/R), so R must be at least z²/PRODUCT_TOL as well as 4|z|.
    """
    zeros = gen.zero_set.points.real
    coverage = float(min(-zeros.min(), zeros.max()))
    required = max(4.0 * reach, reach * reach / PRODUCT_TOL)
    if gen.radius is not None:
        radius = float(gen.radius)
        if radius > coverage + 1:
            raise InvalidParams(
                f"zero set only covers |λ| <= {coverage}, cannot use radius {radius}",
                context={"radius": radius, "coverage": coverage},
            )
    else:
        preferred = max(1000.0 * reach, required, 64.0)
        radius = min(preferred, coverage)
        if radius < preferred:
            logger.warning(f"Product radius capped at the zero-set coverage {coverage} (wanted {preferred:.6g})")
    if radius < required:
        raise RadiusTooSmall(
            f"product radius {radius} is below max(4|z|, z²/{PRODUCT_TOL}) = {required:.6g}",
            context={"radius": radius, "reach": reach, "required": required},
        )
    return radius


def _product_eval(gen: GeneratingFunction, z: np.ndarray, radius: float) -> np.ndarray:
    zeros = gen.zero_set.points
    active = zeros[np.abs(zeros.real) < radius]
    has_origin = np.any(active == 0)
    nonzero = active[active != 0]
    positive = np.sort_complex(nonzero[nonzero.real > 0])
    negative = np.sort_complex(nonzero[nonzero.real < 0])[::-1]
    paired = min(positive.size, negative.size)

    zz = z[:, None]
    out = np.prod((1 - zz / positive[:paired]) * (1 - zz / negative[:paired]), axis=1)
    leftovers = np.concatenate([positive[paired:], negative[paired:]])
    if leftovers.size:
        out = out * np.prod(1 - zz / leftovers, axis=1)
    if has_origin:
        out = out * z
    return out


def _evaluate(gen: GeneratingFunction, z: np.ndarray, radius: Optional[float] = None) -> np.ndarray:
    if gen.form is GeneratingForm.CLOSED_SINE:
        return gen.scale * np.sin(np.pi * z)
    if gen.form is GeneratingForm.SINE_WAVE_CROSSING:
        return gen.scale * (gen.amplitude * np.sin(np.pi * z) - eval_signal(gen.perturbation, z))
    if radius is None:
        radius = _product_radius(gen, float(np.max(np.abs(z))) if z.size else 0.0)
    return gen.scale * _product_eval(gen, z, radius)


def generating_function_eval(gen: GeneratingFunction, z) -> Union[complex, np.ndarray]:
    """Evaluate φ(z) at scalar or array z."""
    z_arr = np.asarray(z, dtype=complex)
    out = _evaluate(gen, z_arr.ravel())
    return complex(out[0]) if z_arr.ndim == 0 else out.reshape(z_arr.shape)


def _perturbation_derivative(g: Spectrum, z: np.ndarray) -> np.ndarray:
    return eval_signal(g.with_values(1j * g.grid * g.values), z)


def _derivative(gen: GeneratingFunction, z: np.ndarray, radius: Optional[float] = None) -> np.ndarray:
    if gen.form is GeneratingForm.CLOSED_SINE:
        return gen.scale * np.pi * np.cos(np.pi * z)
    if gen.form is GeneratingForm.SINE_WAVE_CROSSING:
        return gen.scale * (gen.amplitude * np.pi * np.cos(np.pi * z) - _perturbation_derivative(gen.perturbation, z))
    h = gen.diff_step
    if radius is None:
        radius = _product_radius(gen, float(np.max(np.abs(z))) + h if z.size else h)
    return (_evaluate(gen, z + h, radius) - _evaluate(gen, z - h, radius)) / (2 * h)


def generating_function_derivative(gen: GeneratingFunction, z) -> Union[complex, np.ndarray]:
    z_arr = np.asarray(z, dtype=complex)
    out = _derivative(gen, z_arr.ravel())
    return complex(out[0]) if z_arr.ndim == 0 else out.reshape(z_arr.shape)


# --- sine-type zero sets ----------------------------------------------------------

def _is_real_on_axis(g: Spectrum) -> bool:
    return bool(np.allclose(g.values[::-1], np.conj(g.values), rtol=1e-12, atol=1e-14 * (1 + np.abs(g.values).max())))


def find_sine_type_zeros(gen: GeneratingFunction, n_range: Tuple[int, int]) -> SamplingSet:
    """Locate the zero of A·sin(πx) - g(x) inside each (n - 1/2, n + 1/2).

    Args:
        gen: A sine_wave_crossing generating function
        n_range: Inclusive index range (n_min, n_max)

    Returns:
        The zeros as a SamplingSet with first index n_min

    Raises:
        BracketFailure: A does not exceed the normalized PW¹ norm of g, which
            bounds sup |g| from above, or a bracket shows no sign change
        NonSimpleZero: |φ'| nearly vanishes at a zero
    """
    if gen.form is not GeneratingForm.SINE_WAVE_CROSSING:
        raise InvalidParams("zero finding applies to sine_wave_crossing functions")
    g = gen.perturbation
    if not _is_real_on_axis(g):
        raise InvalidParams("the perturbation g must be real on the real axis")
    bound = pw_norm(g, 1).value
    if gen.amplitude <= bound:
        raise BracketFailure(
            f"amplitude {gen.amplitude} does not exceed the PW¹ norm {bound:.6g} of g",
            context={"amplitude": gen.amplitude, "g_norm": bound, "g_sup_bound": sup_bound(g)},
        )

    n_min, n_max = int(n_range[0]), int(n_range[1])
    if n_max < n_min:
        raise InvalidParams(f"empty index range ({n_min}, {n_max})")
    ns = np.arange(n_min, n_max + 1, dtype=float)

    def phi(x):
        return gen.amplitude * np.sin(np.pi * x) - eval_signal(g, x).real

    lo, hi = ns - 0.5, ns + 0.5
    f_lo = phi(lo)
    f_hi = phi(hi)
    bad = np.sign(f_lo) == np.sign(f_hi)
    if np.any(bad):
        first = int(ns[np.argmax(bad)])
        raise BracketFailure(f"no sign change around n = {first}", context={"n": first})

    # bisection down to ~1e-6, then Newton
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        f_mid = phi(mid)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, f_mid, f_lo)
        hi = np.where(left, hi, mid)
    x = 0.5 * (lo + hi)

    scaled = gen.scaled(1.0 / gen.scale)
    for step_count in range(MAX_NEWTON_STEPS):
        slope = _derivative(scaled, x.astype(complex)).real
        step = phi(x) / slope
        x = np.clip(x - step, ns - 0.5, ns + 0.5)
        if np.max(np.abs(step)) < NEWTON_TOL:
            break
    logger.debug(f"Sine-type zeros for n in [{n_min}, {n_max}] after {step_count + 1} Newton steps")

    slope = _derivative(scaled, x.astype(complex)).real
    weak = np.abs(slope) < 1e-8
    if np.any(weak):
        first = int(ns[np.argmax(weak)])
        raise NonSimpleZero(f"|φ'| below 1e-8 at the zero near n = {first}", context={"n": first})

    return SamplingSet(x, n_min, Provenance.SINE_TYPE_ZEROS)


def sine_wave_crossing_family(amplitude: float, perturbation: Spectrum, n_range: Tuple[int, int]) -> "KernelFamily":
    gen = sine_wave_crossing(amplitude, perturbation)
    return KernelFamily(gen.with_zero_set(find_sine_type_zeros(gen, n_range)))


@dataclass(frozen=True)
class SineTypeReport:
    a_est: float
    b_est: float
    passed: bool
    reason: str = ""


def verify_sine_type(gen: GeneratingFunction, H: float, strip_samples: int, xi_span: float = 10.0) -> SineTypeReport:
    """Empirical bounds A·e^{π|η|} <= |φ(ξ+iη)| <= B·e^{π|η|} on lines |η| ∈ {H, 2H}."""
    if H <= 0:
        raise InvalidParams(f"H must be positive, got {H}")
    if 2 * H > 10.0:
        raise InvalidParams(f"2H = {2 * H} leaves the evaluation strip |Im z| <= 10")
    if gen.form is GeneratingForm.SINE_WAVE_CROSSING:
        bound = pw_norm(gen.perturbation, 1).value
        if gen.amplitude <= bound:
            return SineTypeReport(float("nan"), float("nan"), False,
                                  f"amplitude {gen.amplitude} <= PW¹ norm {bound:.6g} of g")

    xi = np.linspace(-xi_span, xi_span, int(strip_samples))
    ratios = []
    for eta in (H, -H, 2 * H, -2 * H):
        values = _evaluate(gen, xi + 1j * eta)
        ratios.append(np.abs(values) * np.exp(-np.pi * abs(eta)))
    ratios = np.concatenate(ratios)
    if not np.all(np.isfinite(ratios)):
        return SineTypeReport(float("nan"), float("nan"), False, "non-finite values on the strip lines")
    a_est, b_est = float(ratios.min()), float(ratios.max())
    passed = 0 < a_est <= b_est < np.inf
    return SineTypeReport(a_est, b_est, passed, "" if passed else "lower bound vanishes")


# --- kernels and series ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelFamily:
    """Interpolation kernels φ_n built from a generating function and its zero set."""

    generating: GeneratingFunction

    def __post_init__(self):
        if self.generating.zero_set is None:
            raise InvalidParams("kernel family needs a generating function with a zero set")

    @property
    def zero_set(self) -> SamplingSet:
        return self.generating.zero_set

    @cached_property
    def is_shannon(self) -> bool:
        return (self.generating.form is GeneratingForm.CLOSED_SINE
                and self.zero_set.provenance is Provenance.INTEGERS)

    @cached_property
    def derivatives(self) -> np.ndarray:
        """φ'(λ_n) for every stored zero, computed once."""
        points = self.zero_set.points.astype(complex)
        if self.generating.form is GeneratingForm.TRUNCATED_PRODUCT:
            out = np.array([_derivative(self.generating, np.array([p]))[0] for p in points])
        else:
            out = _derivative(self.generating, points)
        weak = np.abs(out) < 1e-8
        if np.any(weak):
            n = int(self.zero_set.indices[np.argmax(weak)])
            raise NonSimpleZero(f"|φ'(λ_n)| below 1e-8 at n = {n}", context={"n": n})
        out.setflags(write=False)
        return out

    def check_range(self, N: int) -> None:
        if N < 0 or not self.zero_set.covers(-N, N):
            raise IndexOutOfRange(
                f"degree {N} exceeds the kernel range [{self.zero_set.first_index}, {self.zero_set.last_index}]",
                context={"N": N},
            )

    def matrix(self, indices: Sequence[int], z) -> np.ndarray:
        """Kernel values φ_n(z) as a (len(z), len(indices)) array."""
        indices = np.asarray(indices, dtype=int)
        lam = self.zero_set.select(indices)
        z = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
        diff = z[:, None] - lam[None, :]

        if self.is_shannon:
            return np.sinc(diff)

        near = np.abs(diff) < SINGULARITY_TOL
        safe = np.where(near, 1.0, diff)
        if self.generating.form is GeneratingForm.TRUNCATED_PRODUCT:
            reach = float(max(np.max(np.abs(z)), np.max(np.abs(lam))))
            radius = _product_radius(self.generating, reach + self.generating.diff_step)
            phi = _evaluate(self.generating, z, radius)
            deriv = _derivative(self.generating, lam.astype(complex), radius)
        else:
            phi = _evaluate(self.generating, z)
            deriv = self.derivatives[indices - self.zero_set.first_index]
        values = phi[:, None] / (deriv[None, :] * safe)
        return np.where(near, 1.0, values)


def kernel_eval(k: KernelFamily, n: int, z) -> Union[complex, np.ndarray]:
    """φ_n(z) with the removable singularity at z = λ_n returning 1."""
    if not k.zero_set.first_index <= n <= k.zero_set.last_index:
        raise IndexOutOfRange(f"kernel index {n} outside [{k.zero_set.first_index}, {k.zero_set.last_index}]",
                              context={"n": n})
    z_arr = np.asarray(z, dtype=complex)
    out = k.matrix([n], z_arr)[:, 0]
    return complex(out[0]) if z_arr.ndim == 0 else out.reshape(z_arr.shape)


def series_from_samples(samples: np.ndarray, k: KernelFamily, indices: Sequence[int], t) -> Union[complex, np.ndarray]:
    """Σ_n samples[n]·φ_n(t) over the given indices."""
    t_arr = np.asarray(t, dtype=complex)
    flat = t_arr.ravel()
    out = np.empty(flat.size, dtype=complex)
    chunk = 512
    for start in range(0, flat.size, chunk):
        out[start:start + chunk] = k.matrix(indices, flat[start:start + chunk]) @ np.asarray(samples, dtype=complex)
    return complex(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)


def _series_samples(f: Signal, k: KernelFamily, N: int) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(f, Spectrum) and f.band_edge > np.pi * (1 + 1e-12):
        raise InvalidParams(f"signal band {f.band_edge} exceeds π")
    k.check_range(N)
    indices = np.arange(-N, N + 1)
    return indices, eval_signal(f, k.zero_set.select(indices))


def nonuniform_series(f: Signal, k: KernelFamily, N: int, t) -> Union[complex, np.ndarray]:
    """(A_N f)(t) = Σ_{|n|≤N} f(λ_n)·φ_n(t).

    Args:
        f: Signal of band at most π
        k: Kernel family whose zero set covers [-N, N]
        N: Truncation degree
        t: Scalar or array of (possibly complex) times

    Returns:
        Series values with the shape of t
    """
    indices, samples = _series_samples(f, k, N)
    return series_from_samples(samples, k, indices, t)


@lru_cache(maxsize=8)
def _integer_family(size: int) -> KernelFamily:
    return KernelFamily(closed_sine(-size, size))


def shannon_family(N: int) -> KernelFamily:
    """Kernel family over Λ = ℤ large enough for degree N."""
    return _integer_family(max(512, int(N)))


def shannon_series(f: Signal, N: int, t) -> Union[complex, np.ndarray]:
    """(S_N f)(t) = Σ_{|n|≤N} f(n)·sin(π(t-n))/(π(t-n))."""
    if N < 0:
        raise InvalidParams(f"N must be >= 0, got {N}")
    return nonuniform_series(f, shannon_family(N), N, t)
