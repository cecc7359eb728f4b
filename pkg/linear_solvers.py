"""Linear transport, acoustic, heat and field-evolution solvers on the periodic box.

All states are carried as Fourier coefficients on the dealiased mode set;
fields come back as TimeSeries sampled at the stepper's snapshot times.
"""
import dataclasses
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from besov_norms import BesovParams, TimeSeries, besov_value, chemin_lerner_norm
from bony_calculus import InequalityReport
from errors import BlowUpError, CFLViolationError, ComponentMismatchError, ConfigurationError, RejectedInputError
from littlewood_paley import DyadicPartition
from spectral_core import (
    Grid,
    RealField,
    dealias_coefficients,
    forward_coefficients,
    inverse_samples,
    read_snapshot,
    write_snapshot,
)

CONTOUR_POINTS = 32
EXPLICIT_HEAT_LIMIT = 2.78


class Scheme(str, Enum):
    RK4_EXPLICIT = "rk4_explicit"
    EXPONENTIAL_RK4 = "exponential_rk4"


@dataclass(frozen=True)
class TimeStepper:
    dt: float
    t_end: float
    scheme: Scheme = Scheme.RK4_EXPLICIT
    snapshot_stride: int = 1
    cfl_safety: float = 0.5

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigurationError(f"t_end must be positive, got {self.t_end}")
        if self.snapshot_stride < 1:
            raise ConfigurationError("snapshot stride must be at least 1")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigurationError("CFL safety factor must lie in (0, 1]")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_end / self.dt - 1e-9))

    @property
    def step(self) -> float:
        """Effective step, t_end / n_steps (never above dt)."""
        return self.t_end / self.n_steps

    def snapshot_steps(self) -> List[int]:
        steps = list(range(0, self.n_steps + 1, self.snapshot_stride))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return steps

    def snapshot_times(self) -> np.ndarray:
        return np.array(self.snapshot_steps(), dtype=float) * self.step

    def replace(self, **changes) -> "TimeStepper":
        return dataclasses.replace(self, **changes)


Forcing = Union[None, TimeSeries, Callable[[float], RealField]]
Sampler = Callable[[float], np.ndarray]


# ─── Forcing and snapshot plumbing ───────────────────────────────────────

def _coefficient_sampler(forcing: Forcing, grid: Grid, components: int, t_end: float) -> Optional[Sampler]:
    """t -> dealiased coefficients of the forcing, or None for no forcing."""
    if forcing is None:
        return None
    if isinstance(forcing, TimeSeries):
        if forcing.grid != grid or forcing.fields[0].components != components:
            raise ComponentMismatchError("forcing does not match the unknown")
        if forcing.horizon < t_end * (1 - 1e-12):
            raise RejectedInputError(f"forcing covers [0, {forcing.horizon}] but the solve runs to {t_end}")
        coeffs = [dealias_coefficients(grid, forward_coefficients(grid, f.samples)) for f in forcing.fields]
        times = forcing.times

        def from_series(t: float) -> np.ndarray:
            if len(times) == 1:
                return coeffs[0]
            i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
            w = min(max((t - times[i]) / (times[i + 1] - times[i]), 0.0), 1.0)
            return (1 - w) * coeffs[i] + w * coeffs[i + 1]

        return from_series

    def from_callable(t: float) -> np.ndarray:
        value = forcing(t)
        if value.grid != grid or value.components != components:
            raise ComponentMismatchError("forcing does not match the unknown")
        return dealias_coefficients(grid, forward_coefficients(grid, value.samples))

    return from_callable


def _velocity_sampler(v: Union[TimeSeries, RealField, None], grid: Grid, t_end: float):
    """t -> physical velocity samples, plus the sup of |v| over the snapshots."""
    if v is None:
        return None, 0.0
    if isinstance(v, RealField):
        v = TimeSeries(np.array([0.0]), [v])
    elif v.horizon < t_end * (1 - 1e-12) and len(v) > 1:
        raise RejectedInputError(f"velocity covers [0, {v.horizon}] but the solve runs to {t_end}")
    if v.grid != grid or v.fields[0].components != grid.dim:
        raise ComponentMismatchError("transport velocity must be a vector field on the solve grid")
    vmax = max(f.max_abs() for f in v.fields)
    if len(v) == 1:
        samples = v.fields[0].samples
        return (lambda t: samples), vmax
    return v.samples_at, vmax


def _check_cfl(ts: TimeStepper, grid: Grid, speed: float):
    if speed <= 0:
        return
    limit = ts.cfl_safety * grid.spacing / speed
    if ts.step > limit * (1 + 1e-12):
        raise CFLViolationError(ts.step, limit)


def _check_finite(coeffs: np.ndarray, t: float, solver: str):
    if not np.all(np.isfinite(coeffs)):
        raise BlowUpError(t, solver)


def _series(grid: Grid, times: Sequence[float], states: List[np.ndarray]) -> TimeSeries:
    return TimeSeries(np.asarray(times), [RealField(grid, inverse_samples(grid, c)) for c in states])


def _integrate_rk4(y0: np.ndarray, rhs: Callable[[float, np.ndarray], np.ndarray], ts: TimeStepper,
                   solver: str, verbose: bool = False) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Classical RK4 on a coefficient array; returns snapshot times and states."""
    dt = ts.step
    wanted = set(ts.snapshot_steps())
    y = y0
    states = [y0.copy()]
    for n in range(ts.n_steps):
        t = n * dt
        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_finite(y, t + dt, solver)
        if n + 1 in wanted:
            states.append(y.copy())
        if verbose and (n + 1) % max(1, ts.n_steps // 10) == 0:
            print(f"   {solver}: step {n + 1}/{ts.n_steps}")
    return ts.snapshot_times(), states


def _advection_coefficients(grid: Grid, v: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Dealiased coefficients of (v·∇)a for a given by its coefficients."""
    out = np.zeros(coeffs.shape)
    for j in range(grid.dim):
        out = out + v[j] * inverse_samples(grid, 1j * grid.derivative_wavevector[j] * coeffs)
    return dealias_coefficients(grid, forward_coefficients(grid, out))


def _initial_coefficients(f: RealField) -> np.ndarray:
    return dealias_coefficients(f.grid, forward_coefficients(f.grid, f.samples))


# ─── Transport ───────────────────────────────────────────────────────────

def solve_transport(a0: RealField, v: Union[TimeSeries, RealField], forcing: Forcing, ts: TimeStepper,
                    verbose: bool = False) -> TimeSeries:
    """∂_t a + (v·∇)a = f by RK4, componentwise for vector a."""
    grid = a0.grid
    sample_v, vmax = _velocity_sampler(v, grid, ts.t_end)
    _check_cfl(ts, grid, vmax)
    source = _coefficient_sampler(forcing, grid, a0.components, ts.t_end)

    def rhs(t, coeffs):
        out = -_advection_coefficients(grid, sample_v(t), coeffs)
        if source is not None:
            out = out + source(t)
        return out

    times, states = _integrate_rk4(_initial_coefficients(a0), rhs, ts, "transport", verbose)
    return _series(grid, times, states)


def solve_acoustic_transport(rho0: RealField, u0: RealField, v: Union[TimeSeries, RealField, None],
                             forcing_u: Forcing, T_L: float, ts: TimeStepper, forcing_rho: Forcing = None,
                             verbose: bool = False) -> Tuple[TimeSeries, TimeSeries]:
    """The coupled linear system

        ∂_t ρ + v·∇ρ + div u = s
        ∂_t u + T_L ∇ρ + (v·∇)u = f

    under one RK4. The CFL speed is max|v| + sqrt(T_L).
    """
    grid = rho0.grid
    if not rho0.is_scalar or u0.components != grid.dim or u0.grid != grid:
        raise ComponentMismatchError("acoustic solve needs scalar rho0 and vector u0 on one grid")
    if T_L <= 0:
        raise ConfigurationError("background temperature must be positive")
    sample_v, vmax = _velocity_sampler(v, grid, ts.t_end)
    _check_cfl(ts, grid, vmax + math.sqrt(T_L))
    source_u = _coefficient_sampler(forcing_u, grid, grid.dim, ts.t_end)
    source_rho = _coefficient_sampler(forcing_rho, grid, 1, ts.t_end)
    ik = 1j * grid.derivative_wavevector

    def rhs(t, y):
        rho, u = y[:1], y[1:]
        d_rho = -np.sum(ik * u, axis=0, keepdims=True)
        d_u = -T_L * ik * rho
        if sample_v is not None:
            vel = sample_v(t)
            d_rho = d_rho - _advection_coefficients(grid, vel, rho)
            d_u = d_u - _advection_coefficients(grid, vel, u)
        if source_rho is not None:
            d_rho = d_rho + source_rho(t)
        if source_u is not None:
            d_u = d_u + source_u(t)
        return np.concatenate([d_rho, d_u])

    y0 = np.concatenate([_initial_coefficients(rho0), _initial_coefficients(u0)])
    times, states = _integrate_rk4(y0, rhs, ts, "acoustic", verbose)
    return (_series(grid, times, [s[:1] for s in states]),
            _series(grid, times, [s[1:] for s in states]))


# ─── Heat ────────────────────────────────────────────────────────────────

@dataclass
class _ExponentialWeights:
    """Exponential RK4 weights for the diagonal operator -κ̃|k|², by contour quadrature."""
    full: np.ndarray
    half: np.ndarray
    start: np.ndarray
    middle: np.ndarray
    end: np.ndarray


def _exponential_weights(grid: Grid, kappa_tilde: float, dt: float) -> _ExponentialWeights:
    linear = -kappa_tilde * grid.derivative_k_squared
    roots = np.exp(1j * np.pi * (np.arange(CONTOUR_POINTS) + 0.5) / CONTOUR_POINTS)
    lr = dt * linear[..., np.newaxis] + roots
    exp_lr = np.exp(lr)
    start = dt * np.real(np.mean((-4 - lr + exp_lr * (4 - 3 * lr + lr ** 2)) / lr ** 3, axis=-1))
    middle = dt * np.real(np.mean((2 + lr + exp_lr * (lr - 2)) / lr ** 3, axis=-1))
    end = dt * np.real(np.mean((-4 - 3 * lr - lr ** 2 + exp_lr * (4 - lr)) / lr ** 3, axis=-1))
    return _ExponentialWeights(
        full=np.exp(dt * linear),
        half=np.exp(0.5 * dt * linear),
        start=start,
        middle=middle,
        end=end,
    )


def solve_heat(theta0: RealField, kappa_tilde: float, forcing: Forcing, ts: TimeStepper,
               verbose: bool = False) -> TimeSeries:
    """∂_t θ - κ̃Δθ = f.

    ``Scheme.EXPONENTIAL_RK4`` integrates the diffusion exactly and is stable for
    any dt; ``Scheme.RK4_EXPLICIT`` refuses steps beyond its stability limit.
    """
    if not (kappa_tilde > 0 and math.isfinite(kappa_tilde)):
        raise ConfigurationError(f"heat solve needs a positive diffusivity, got {kappa_tilde}")
    grid = theta0.grid
    source = _coefficient_sampler(forcing, grid, theta0.components, ts.t_end)
    y0 = _initial_coefficients(theta0)
    dt = ts.step
    linear = -kappa_tilde * grid.derivative_k_squared

    if ts.scheme == Scheme.RK4_EXPLICIT:
        stiffness = dt * kappa_tilde * float(np.max(grid.derivative_k_squared * grid.dealias_mask))
        if stiffness > EXPLICIT_HEAT_LIMIT:
            raise CFLViolationError(dt, EXPLICIT_HEAT_LIMIT * dt / stiffness)

        def rhs(t, coeffs):
            out = linear * coeffs
            return out if source is None else out + source(t)

        times, states = _integrate_rk4(y0, rhs, ts, "heat", verbose)
        return _series(grid, times, states)

    w = _exponential_weights(grid, kappa_tilde, dt)
    wanted = set(ts.snapshot_steps())
    y = y0
    states = [y0.copy()]
    for n in range(ts.n_steps):
        t = n * dt
        if source is None:
            y = w.full * y
        else:
            y = (w.full * y + w.start * source(t) + 4 * w.middle * source(t + dt / 2)
                 + w.end * source(t + dt))
        _check_finite(y, t + dt, "heat")
        if n + 1 in wanted:
            states.append(y.copy())
    return _series(grid, ts.snapshot_times(), states)


# ─── Field evolution ─────────────────────────────────────────────────────

def solve_e_evolution(E0: RealField, flux: Forcing, ts: TimeStepper, source: Forcing = None,
                      verbose: bool = False) -> TimeSeries:
    """∂_t E = -∇Δ⁻¹div(flux) (+ source), flux given in time."""
    grid = E0.grid
    if E0.components != grid.dim:
        raise ComponentMismatchError("the field E must be a vector field")
    flux_at = _coefficient_sampler(flux, grid, grid.dim, ts.t_end)
    extra = _coefficient_sampler(source, grid, grid.dim, ts.t_end)
    k = grid.derivative_wavevector
    k2 = grid.derivative_k_squared
    inv_k2 = np.zeros_like(k2)
    inv_k2[k2 > 0] = 1.0 / k2[k2 > 0]

    def rhs(t, coeffs):
        out = np.zeros_like(coeffs)
        if flux_at is not None:
            q = flux_at(t)
            out = out - k * np.sum(k * q, axis=0, keepdims=True) * inv_k2
        if extra is not None:
            out = out + extra(t)
        return out

    times, states = _integrate_rk4(_initial_coefficients(E0), rhs, ts, "field", verbose)
    return _series(grid, times, states)


# ─── Smoothing-estimate witness ──────────────────────────────────────────

def _forcing_series(forcing: Forcing, theta0: RealField, times: np.ndarray) -> TimeSeries:
    if forcing is None:
        return TimeSeries(times, [RealField.zeros(theta0.grid, theta0.components) for _ in times])
    if isinstance(forcing, TimeSeries):
        return TimeSeries(times, [forcing.at(t) for t in times])
    return TimeSeries(times, [forcing(float(t)) for t in times])


def heat_estimate_witness(cases: Sequence[Tuple[RealField, Forcing]], kappa_tilde: float, ts: TimeStepper,
                          partition: DyadicPartition, s: float, alpha: float = 1.0) -> InequalityReport:
    """Ratio of the two sides of the parabolic smoothing bound for each (θ0, f).

    alpha = 1:  κ̃||θ||_{L̃¹(B^{s+2})}  vs  (1+T)(||θ0||_{B^s} + ||f||_{L̃¹(B^s)})
    alpha = ∞:  ||θ||_{L̃^∞(B^s)}     vs  2||θ0||_{B^s} + (1+T)κ̃⁻¹||f||_{L̃^∞(B^{s-2})}
    """
    if alpha not in (1.0, math.inf):
        raise ConfigurationError("the smoothing witness supports alpha = 1 or ∞")
    T = ts.t_end
    exponential = ts.replace(scheme=Scheme.EXPONENTIAL_RK4)
    ratios = []
    for theta0, forcing in cases:
        theta = solve_heat(theta0, kappa_tilde, forcing, exponential)
        f_series = _forcing_series(forcing, theta0, theta.times)
        theta0_norm = besov_value(theta.fields[0], BesovParams(s), partition)
        if alpha == 1.0:
            lhs = kappa_tilde * chemin_lerner_norm(theta, BesovParams(s + 2), 1.0, partition)
            rhs = (1 + T) * theta0_norm + (1 + T) * chemin_lerner_norm(f_series, BesovParams(s), 1.0, partition)
        else:
            lhs = chemin_lerner_norm(theta, BesovParams(s), math.inf, partition)
            rhs = 2 * theta0_norm + (1 + T) / kappa_tilde * chemin_lerner_norm(
                f_series, BesovParams(s - 2), math.inf, partition)
        ratios.append(lhs / rhs if rhs > 0 else 0.0)
    name = "heat_smoothing_L1" if alpha == 1.0 else "heat_smoothing_Linf"
    return InequalityReport(name, len(cases), ratios)


# ─── Series I/O ──────────────────────────────────────────────────────────

def save_series(directory: Union[str, Path], series: TimeSeries, name: str) -> Path:
    """One snapshot file per time plus an index.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, (t, f) in enumerate(zip(series.times, series.fields)):
        path = write_snapshot(directory / f"{name}_{i:05d}.bin", f, name=name, time=float(t))
        files.append(path.name)
    index = directory / f"{name}_index.json"
    index.write_text(json.dumps({"name": name, "times": series.times.tolist(), "files": files}, indent=2))
    return index


def load_series(index_path: Union[str, Path]) -> TimeSeries:
    index_path = Path(index_path)
    index = json.loads(index_path.read_text())
    fields = [read_snapshot(index_path.parent / name)[0] for name in index["files"]]
    return TimeSeries(np.array(index["times"]), fields)
