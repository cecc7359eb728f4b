"""Named initial-data families for the transformed system."""
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from bony_calculus import random_bandlimited_field
from ep_iteration import EPState, PhysicalParams
from errors import AmplitudeClampWarning, ConfigurationError
from spectral_core import (
    Grid,
    RealField,
    dealias,
    forward_coefficients,
    inverse_laplacian_gradient,
    inverse_samples,
)

CLAMP_FACTOR = 0.9
MIN_DENSITY_FRACTION = 0.5


class DataFamily(str, Enum):
    GAUSSIAN_BUMP = "gaussian_bump"
    ACOUSTIC_TONE = "acoustic_tone"
    RANDOM_BANDLIMITED = "random_bandlimited"


@dataclass(frozen=True)
class InitialDataFamily:
    name: DataFamily
    amplitude: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "name", DataFamily(self.name))
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise ConfigurationError(f"amplitude must be a finite non-negative number, got {self.amplitude}")


def _bump(grid: Grid) -> np.ndarray:
    width = grid.box_length / 10
    centre = grid.box_length / 2
    r2 = sum((x - centre) ** 2 for x in grid.coordinates)
    return np.exp(-r2 / (2 * width ** 2))


def _smoother(f: RealField) -> RealField:
    """(1 + |k|²)^{-1/2}: one derivative's worth of extra decay."""
    grid = f.grid
    weight = 1.0 / np.sqrt(1.0 + grid.derivative_k_squared)
    return RealField(grid, inverse_samples(grid, weight * forward_coefficients(grid, f.samples)))


def _profiles(family: InitialDataFamily, grid: Grid):
    """Unit-amplitude (ρ, u, θ) shapes for the family."""
    zeros_u = np.zeros((grid.dim,) + grid.shape)
    if family.name == DataFamily.GAUSSIAN_BUMP:
        bump = _bump(grid)
        u = zeros_u.copy()
        u[0] = bump
        return RealField(grid, bump), RealField(grid, u), _smoother(RealField(grid, bump))
    if family.name == DataFamily.ACOUSTIC_TONE:
        tone = np.cos(grid.wavenumber_scale * grid.coordinates[0])
        return RealField(grid, tone), RealField(grid, zeros_u), RealField.zeros(grid)
    rng = np.random.default_rng(family.seed)
    rho = random_bandlimited_field(grid, rng, slope=-3.0)
    u = random_bandlimited_field(grid, rng, slope=-3.0, components=grid.dim)
    theta = _smoother(random_bandlimited_field(grid, rng, slope=-3.0))
    return rho, u, theta


def _neutralised(rho: np.ndarray) -> np.ndarray:
    """Shift ρ so that mean(e^ρ) = 1, i.e. mean n0 = n̄."""
    return rho - math.log(float(np.mean(np.exp(rho))))


def generate_initial_data(family: InitialDataFamily, grid: Grid, params: PhysicalParams) -> EPState:
    """EPState at t = 0 with n0 >= n̄/2 and E0 = ∇Δ⁻¹(n0 - n̄).

    Amplitudes that would push n0 below n̄/2 are scaled down with an
    AmplitudeClampWarning.
    """
    if family.amplitude == 0:
        return EPState.zeros(grid)
    rho_shape, u_shape, theta_shape = _profiles(family, grid)
    rho_shape = dealias(rho_shape)
    amplitude = family.amplitude
    floor = math.log(MIN_DENSITY_FRACTION)
    while True:
        rho = _neutralised(amplitude * rho_shape.samples)
        if float(np.min(rho)) >= floor:
            break
        amplitude *= CLAMP_FACTOR
    if amplitude < family.amplitude:
        warnings.warn(
            f"amplitude {family.amplitude:g} clamped to {amplitude:.4g} to keep n0 >= n̄/2",
            AmplitudeClampWarning,
            stacklevel=2,
        )
    rho_field = RealField(grid, rho)
    n_excess = RealField(grid, params.n_bar * np.expm1(rho))
    return EPState(
        rho=rho_field,
        u=dealias(u_shape * amplitude),
        theta=dealias(theta_shape * amplitude),
        E=inverse_laplacian_gradient(n_excess),
        time=0.0,
    )
