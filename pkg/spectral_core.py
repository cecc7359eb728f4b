"""Periodic box, real/spectral fields and the Fourier-multiplier operators.

Conventions used everywhere in the lab:

- The box is the N-torus of side ``box_length`` sampled on ``n`` points per axis.
- Transforms are full complex ``scipy.fft.fftn`` with ``norm="forward"``, so a
  constant field ``c`` has zero-mode coefficient ``c`` and
  ``||f||_{L2}^2 = L^N * sum |F_k|^2``.
- The dyadic variable is the integer mode radius ``|m|`` (physical wavenumber
  ``k = 2*pi*m/L``).
- Products are dealiased on the spherical set ``|m| <= n/3``; this keeps every
  quadratic product of dealiased fields alias-free.
- Derivative symbols zero the Nyquist component, so ``div(grad f) == laplacian(f)``.
"""
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft as sfft

from errors import (
    ComponentMismatchError,
    ConfigurationError,
    GridMismatchError,
    NeutralityWarning,
    OperatorDefinitionError,
    RejectedInputError,
)

SYMMETRY_TOLERANCE = 1e-10
MEAN_TOLERANCE = 1e-10
SNAPSHOT_FORMAT = "eplab-snapshot-v1"

_fft_workers = 1


def set_fft_workers(workers: int) -> None:
    """Number of threads scipy.fft may use for every transform in this process."""
    global _fft_workers
    _fft_workers = max(1, int(workers))


def fft_workers() -> int:
    return _fft_workers


# ─── Grid ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the N-torus."""
    dim: int
    points_per_axis: int
    box_length: float = 2 * math.pi

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {self.dim}")
        n = self.points_per_axis
        if n < 8 or n & (n - 1):
            raise ConfigurationError(f"points per axis must be a power of two >= 8, got {n}")
        if not (self.box_length > 0 and math.isfinite(self.box_length)):
            raise ConfigurationError(f"box length must be positive, got {self.box_length}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def spatial_axes(self) -> Tuple[int, ...]:
        """Axes of a (components, *shape) array that carry space."""
        return tuple(range(1, self.dim + 1))

    @property
    def spacing(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def volume(self) -> float:
        return self.box_length ** self.dim

    @property
    def wavenumber_scale(self) -> float:
        """Physical wavenumber of mode number 1."""
        return 2 * math.pi / self.box_length

    @property
    def dealias_radius(self) -> float:
        return self.points_per_axis / 3

    @cached_property
    def mode_numbers(self) -> np.ndarray:
        """Integer mode numbers, shape (dim, *shape), FFT ordering."""
        n = self.points_per_axis
        m1 = np.rint(sfft.fftfreq(n, d=1.0 / n)).astype(int)
        return np.stack(np.meshgrid(*([m1] * self.dim), indexing="ij"))

    @cached_property
    def wavevector(self) -> np.ndarray:
        return self.wavenumber_scale * self.mode_numbers

    @cached_property
    def derivative_wavevector(self) -> np.ndarray:
        """Wavevector with the Nyquist component set to zero on each axis."""
        k = self.wavevector.copy()
        k[self.mode_numbers == -(self.points_per_axis // 2)] = 0.0
        return k

    @cached_property
    def derivative_k_squared(self) -> np.ndarray:
        return np.sum(self.derivative_wavevector ** 2, axis=0)

    @cached_property
    def mode_radius(self) -> np.ndarray:
        """|m| on every retained mode, the variable the dyadic blocks cut on."""
        return np.sqrt(np.sum(self.mode_numbers.astype(float) ** 2, axis=0))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return (self.mode_radius <= self.dealias_radius + 1e-12).astype(float)

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, ...]:
        x1 = self.spacing * np.arange(self.points_per_axis)
        return tuple(np.meshgrid(*([x1] * self.dim), indexing="ij"))


# ─── Fields ──────────────────────────────────────────────────────────────

def _check_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise RejectedInputError(f"{what} contains non-finite values")


@dataclass(frozen=True)
class RealField:
    """Real samples of shape (components, *grid.shape); components is 1 or dim."""
    grid: Grid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim == self.grid.dim:
            arr = arr[np.newaxis]
        if arr.shape[1:] != self.grid.shape:
            raise RejectedInputError(f"samples of shape {arr.shape} do not fit grid {self.grid.shape}")
        if arr.shape[0] not in (1, self.grid.dim):
            raise ComponentMismatchError(f"{arr.shape[0]} components on a {self.grid.dim}-D grid")
        _check_finite(arr, "field")
        object.__setattr__(self, "samples", arr)

    @classmethod
    def zeros(cls, grid: Grid, components: int = 1) -> "RealField":
        return cls(grid, np.zeros((components,) + grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., Union[np.ndarray, Sequence[np.ndarray]]]) -> "RealField":
        """Sample ``fn(*coordinates)``; a sequence return value becomes a vector field."""
        values = fn(*grid.coordinates)
        if isinstance(values, (list, tuple)):
            values = np.stack([np.broadcast_to(np.asarray(v, dtype=float), grid.shape) for v in values])
        elif np.ndim(values) != grid.dim + 1:
            values = np.broadcast_to(np.asarray(values, dtype=float), grid.shape)
        return cls(grid, np.array(values, dtype=float))

    @property
    def components(self) -> int:
        return self.samples.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.components == 1

    @property
    def is_vector(self) -> bool:
        return self.components == self.grid.dim

    def component(self, j: int) -> "RealField":
        return RealField(self.grid, self.samples[j:j + 1])

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean magnitude over components."""
        if self.is_scalar:
            return np.abs(self.samples[0])
        return np.sqrt(np.sum(self.samples ** 2, axis=0))

    def max_abs(self) -> float:
        return float(np.max(self.magnitude()))

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=self.grid.spatial_axes)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, RealField):
            _check_same_grid(self, other)
            if other.components != self.components:
                raise ComponentMismatchError(f"cannot combine {self.components} and {other.components} components")
            return other.samples
        return other

    def __add__(self, other) -> "RealField":
        return RealField(self.grid, self.samples + self._coerce(other))

    def __sub__(self, other) -> "RealField":
        return RealField(self.grid, self.samples - self._coerce(other))

    def __mul__(self, scalar: float) -> "RealField":
        if isinstance(scalar, RealField):
            raise TypeError("use spectral_core.multiply for field products")
        return RealField(self.grid, self.samples * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "RealField":
        return RealField(self.grid, -self.samples)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients, same layout as RealField.samples."""
    grid: Grid
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.coefficients, dtype=complex)
        if arr.ndim == self.grid.dim:
            arr = arr[np.newaxis]
        if arr.shape[1:] != self.grid.shape or arr.shape[0] not in (1, self.grid.dim):
            raise RejectedInputError(f"coefficients of shape {arr.shape} do not fit grid {self.grid.shape}")
        _check_finite(arr, "spectrum")
        object.__setattr__(self, "coefficients", arr)

    @property
    def components(self) -> int:
        return self.coefficients.shape[0]


def _check_same_grid(*fields):
    grids = {f.grid for f in fields}
    if len(grids) > 1:
        raise GridMismatchError(f"fields live on different grids: {sorted(map(repr, grids))}")


# ─── Transforms ──────────────────────────────────────────────────────────

def forward_coefficients(grid: Grid, samples: np.ndarray) -> np.ndarray:
    """Unchecked forward transform of a (components, *shape) array."""
    return sfft.fftn(samples, axes=grid.spatial_axes, norm="forward", workers=_fft_workers)


def inverse_samples(grid: Grid, coefficients: np.ndarray) -> np.ndarray:
    """Unchecked inverse transform; the imaginary part is discarded."""
    return sfft.ifftn(coefficients, axes=grid.spatial_axes, norm="forward", workers=_fft_workers).real


def reflected(grid: Grid, coefficients: np.ndarray) -> np.ndarray:
    """F(-k) for every k, in FFT ordering."""
    axes = grid.spatial_axes
    return np.roll(np.flip(coefficients, axis=axes), shift=1, axis=axes)


def fft_forward(f: RealField) -> SpectralField:
    return SpectralField(f.grid, forward_coefficients(f.grid, f.samples))


def fft_inverse(spec: SpectralField, tolerance: float = SYMMETRY_TOLERANCE) -> RealField:
    """Inverse transform of a spectrum that must be Hermitian to ``tolerance``.

    Violations within tolerance are projected away; larger ones are rejected.
    """
    coeffs = spec.coefficients
    scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    if scale > 0:
        mirror = np.conj(reflected(spec.grid, coeffs))
        violation = float(np.max(np.abs(coeffs - mirror))) / scale
        if violation > tolerance:
            raise RejectedInputError(f"spectrum is not Hermitian (relative violation {violation:.2e})")
        coeffs = 0.5 * (coeffs + mirror)
    return RealField(spec.grid, inverse_samples(spec.grid, coeffs))


Multiplier = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def apply_multiplier(spec: SpectralField, multiplier: Multiplier) -> SpectralField:
    """Multiply coefficients by m(k); ``multiplier`` is an array or a function of the wavevector."""
    grid = spec.grid
    if callable(multiplier):
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.asarray(multiplier(grid.wavevector))
    else:
        values = np.asarray(multiplier)
    if not np.all(np.isfinite(values)):
        raise OperatorDefinitionError("multiplier is not finite on every represented wavenumber")
    try:
        return SpectralField(grid, spec.coefficients * values)
    except ValueError as exc:
        raise OperatorDefinitionError(f"multiplier of shape {values.shape} does not broadcast: {exc}") from exc


# ─── Differential and nonlocal operators ─────────────────────────────────

def _require_scalar(f: RealField, op: str):
    if not f.is_scalar:
        raise ComponentMismatchError(f"{op} needs a scalar field, got {f.components} components")


def _require_vector(u: RealField, op: str):
    if u.components != u.grid.dim:
        raise ComponentMismatchError(f"{op} needs a {u.grid.dim}-component field, got {u.components}")


def gradient(f: RealField) -> RealField:
    _require_scalar(f, "gradient")
    grid = f.grid
    coeffs = forward_coefficients(grid, f.samples)
    return RealField(grid, inverse_samples(grid, 1j * grid.derivative_wavevector * coeffs))


def divergence(u: RealField) -> RealField:
    _require_vector(u, "divergence")
    grid = u.grid
    coeffs = forward_coefficients(grid, u.samples)
    div = np.sum(1j * grid.derivative_wavevector * coeffs, axis=0, keepdims=True)
    return RealField(grid, inverse_samples(grid, div))


def laplacian(f: RealField) -> RealField:
    grid = f.grid
    coeffs = forward_coefficients(grid, f.samples)
    return RealField(grid, inverse_samples(grid, -grid.derivative_k_squared * coeffs))


def partial_derivative(f: RealField, axis: int, order: int = 1) -> RealField:
    """∂_axis^order applied to every component."""
    grid = f.grid
    if not 0 <= axis < grid.dim:
        raise ConfigurationError(f"axis {axis} outside a {grid.dim}-D grid")
    coeffs = forward_coefficients(grid, f.samples)
    symbol = (1j * grid.derivative_wavevector[axis]) ** order
    return RealField(grid, inverse_samples(grid, symbol * coeffs))


def _check_neutral(f: RealField, coeffs: np.ndarray, tolerance: float, warn: bool):
    mean = float(np.abs(coeffs[(0,) * (f.grid.dim + 1)]))
    if warn and mean > tolerance * max(1.0, f.max_abs()):
        warnings.warn(
            f"inverse Laplacian applied to data with mean {mean:.3e}; the mean is dropped",
            NeutralityWarning,
            stacklevel=3,
        )


def _inverse_k_squared(grid: Grid) -> np.ndarray:
    k2 = grid.derivative_k_squared
    out = np.zeros_like(k2)
    nonzero = k2 > 0
    out[nonzero] = 1.0 / k2[nonzero]
    return out


def inverse_laplacian(f: RealField, mean_tolerance: float = MEAN_TOLERANCE, warn: bool = True) -> RealField:
    """Zero-mean solution Φ of ΔΦ = f - mean(f)."""
    _require_scalar(f, "inverse_laplacian")
    grid = f.grid
    coeffs = forward_coefficients(grid, f.samples)
    _check_neutral(f, coeffs, mean_tolerance, warn)
    return RealField(grid, inverse_samples(grid, -_inverse_k_squared(grid) * coeffs))


def inverse_laplacian_gradient(f: RealField, mean_tolerance: float = MEAN_TOLERANCE,
                               warn: bool = True) -> RealField:
    """E = ∇Δ⁻¹f, so that div E = f - mean(f) and E is curl-free."""
    _require_scalar(f, "inverse_laplacian_gradient")
    grid = f.grid
    coeffs = forward_coefficients(grid, f.samples)
    _check_neutral(f, coeffs, mean_tolerance, warn)
    symbol = -1j * grid.derivative_wavevector * _inverse_k_squared(grid)
    return RealField(grid, inverse_samples(grid, symbol * coeffs))


def leray_type_projection(u: RealField) -> RealField:
    """∇Δ⁻¹div u: the gradient part of u."""
    _require_vector(u, "leray_type_projection")
    grid = u.grid
    k = grid.derivative_wavevector
    coeffs = forward_coefficients(grid, u.samples)
    k_dot_u = np.sum(k * coeffs, axis=0, keepdims=True)
    return RealField(grid, inverse_samples(grid, k * k_dot_u * _inverse_k_squared(grid)))


def curl_norm(E: RealField) -> float:
    """L2 norm of curl E (zero in one dimension)."""
    _require_vector(E, "curl_norm")
    grid = E.grid
    if grid.dim == 1:
        return 0.0
    coeffs = forward_coefficients(grid, E.samples)
    ik = 1j * grid.derivative_wavevector
    if grid.dim == 2:
        curl = ik[0] * coeffs[1] - ik[1] * coeffs[0]
        power = np.abs(curl) ** 2
    else:
        curl = np.stack([
            ik[1] * coeffs[2] - ik[2] * coeffs[1],
            ik[2] * coeffs[0] - ik[0] * coeffs[2],
            ik[0] * coeffs[1] - ik[1] * coeffs[0],
        ])
        power = np.sum(np.abs(curl) ** 2, axis=0)
    return math.sqrt(grid.volume * float(np.sum(power)))


# ─── Dealiased products ──────────────────────────────────────────────────

def dealias_coefficients(grid: Grid, coefficients: np.ndarray) -> np.ndarray:
    return coefficients * grid.dealias_mask


def dealias(f: RealField) -> RealField:
    grid = f.grid
    return RealField(grid, inverse_samples(grid, dealias_coefficients(grid, forward_coefficients(grid, f.samples))))


def dealiased_product_samples(grid: Grid, product: np.ndarray) -> np.ndarray:
    return inverse_samples(grid, dealias_coefficients(grid, forward_coefficients(grid, product)))


def multiply(f: RealField, g: RealField) -> RealField:
    """Dealiased pointwise product; a scalar factor broadcasts over vector components."""
    _check_same_grid(f, g)
    if not (f.is_scalar or g.is_scalar or f.components == g.components):
        raise ComponentMismatchError(f"cannot multiply {f.components} by {g.components} components")
    return RealField(f.grid, dealiased_product_samples(f.grid, f.samples * g.samples))


def dot(u: RealField, v: RealField) -> RealField:
    """Dealiased u·v."""
    _check_same_grid(u, v)
    if u.components != v.components:
        raise ComponentMismatchError(f"dot of {u.components} and {v.components} components")
    return RealField(u.grid, dealiased_product_samples(u.grid, np.sum(u.samples * v.samples, axis=0, keepdims=True)))


def advect(v: RealField, a: RealField) -> RealField:
    """Dealiased (v·∇)a, componentwise on a."""
    _check_same_grid(v, a)
    _require_vector(v, "advect")
    grid = v.grid
    coeffs = forward_coefficients(grid, a.samples)
    out = np.zeros_like(a.samples)
    for j in range(grid.dim):
        out += v.samples[j] * inverse_samples(grid, 1j * grid.derivative_wavevector[j] * coeffs)
    return RealField(grid, dealiased_product_samples(grid, out))


# ─── Resolution changes and I/O ──────────────────────────────────────────

def prolong(f: RealField, fine: Grid) -> RealField:
    """Spectral interpolation of f onto a finer grid of the same box.

    Coarse Nyquist coefficients are dropped.
    """
    coarse = f.grid
    if fine.dim != coarse.dim or not math.isclose(fine.box_length, coarse.box_length):
        raise GridMismatchError("prolongation needs the same dimension and box")
    if fine.points_per_axis < coarse.points_per_axis:
        raise GridMismatchError("target grid is coarser than the source")
    coeffs = forward_coefficients(coarse, f.samples)
    nyquist = coarse.points_per_axis // 2
    m1 = np.rint(sfft.fftfreq(coarse.points_per_axis, d=1.0 / coarse.points_per_axis)).astype(int)
    keep = np.flatnonzero(np.abs(m1) != nyquist)
    target = m1[keep] % fine.points_per_axis
    out = np.zeros((f.components,) + fine.shape, dtype=complex)
    comp = np.arange(f.components)
    out[np.ix_(comp, *([target] * coarse.dim))] = coeffs[np.ix_(comp, *([keep] * coarse.dim))]
    return RealField(fine, inverse_samples(fine, out))


def write_snapshot(path: Union[str, Path], f: RealField, name: str = "", time: Optional[float] = None) -> Path:
    """One JSON header line followed by little-endian float64 samples in row-major order."""
    path = Path(path)
    header = {
        "format": SNAPSHOT_FORMAT,
        "name": name,
        "time": time,
        "dim": f.grid.dim,
        "points_per_axis": f.grid.points_per_axis,
        "box_length": f.grid.box_length,
        "components": f.components,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(np.ascontiguousarray(f.samples, dtype="<f8").tobytes(order="C"))
    return path


def read_snapshot(path: Union[str, Path]) -> Tuple[RealField, dict]:
    raw = Path(path).read_bytes()
    head, _, body = raw.partition(b"\n")
    header = json.loads(head)
    if header.get("format") != SNAPSHOT_FORMAT:
        raise RejectedInputError(f"{path} is not a snapshot file")
    grid = Grid(header["dim"], header["points_per_axis"], header["box_length"])
    samples = np.frombuffer(body, dtype="<f8").reshape((header["components"],) + grid.shape)
    return RealField(grid, samples.copy()), header


def zero_like(f: RealField) -> RealField:
    return RealField.zeros(f.grid, f.components)


def stack_components(parts: List[RealField]) -> RealField:
    """Scalar fields → one vector field."""
    _check_same_grid(*parts)
    return RealField(parts[0].grid, np.concatenate([p.samples for p in parts]))
