"""Smooth dyadic partition of unity and the block operators Δ_q, S_q."""
import itertools
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ConfigurationError, GridMismatchError, RejectedInputError
from spectral_core import (
    Grid,
    RealField,
    forward_coefficients,
    inverse_samples,
    partial_derivative,
)

INNER_RADIUS = 3.0 / 4.0
OUTER_RADIUS = 4.0 / 3.0


def _flat_transition(t: np.ndarray) -> np.ndarray:
    """exp(-1/t) for t > 0, zero otherwise."""
    t = np.asarray(t, dtype=float)
    positive = t > 0
    out = np.zeros_like(t)
    out[positive] = np.exp(-1.0 / t[positive])
    return out


def chi(r) -> np.ndarray:
    """Radial cutoff: 1 on [0, 3/4], 0 on [4/3, ∞), smooth and monotone between."""
    r = np.asarray(r, dtype=float)
    inner = _flat_transition(OUTER_RADIUS - r)
    outer = _flat_transition(r - INNER_RADIUS)
    return inner / (inner + outer)


def phi(r) -> np.ndarray:
    """Annulus profile χ(r/2) - χ(r), supported in [3/4, 8/3]."""
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


def top_block_index(grid: Grid) -> int:
    """Largest q whose block meets the dealiased mode set."""
    q_max = int(math.floor(math.log2(grid.dealias_radius)))
    if q_max < 0:
        raise ConfigurationError(f"grid with {grid.points_per_axis} points has no dyadic blocks")
    return q_max


@dataclass(frozen=True)
class DyadicPartition:
    """Block multipliers for q = -1 .. q_max on one grid, dealias mask included."""
    grid: Grid
    q_max: int
    multipliers: Tuple[np.ndarray, ...] = field(repr=False, compare=False)

    @property
    def q_range(self) -> range:
        return range(-1, self.q_max + 1)

    def block_multiplier(self, q: int) -> np.ndarray:
        if q < -1:
            raise RejectedInputError(f"block index {q} below -1")
        if q > self.q_max:
            return np.zeros(self.grid.shape)
        return self.multipliers[q + 1]

    def low_pass_multiplier(self, q: int) -> np.ndarray:
        """S_q = Σ_{p <= q-1} Δ_p; S_q for q <= -1 is zero."""
        out = np.zeros(self.grid.shape)
        for p in range(-1, min(q - 1, self.q_max) + 1):
            out = out + self.multipliers[p + 1]
        return out

    def partition_sum(self) -> np.ndarray:
        return np.sum(self.multipliers, axis=0)

    def partition_residual(self) -> float:
        """max |Σ_q multiplier - 1| over retained modes."""
        retained = self.grid.dealias_mask > 0
        return float(np.max(np.abs(self.partition_sum()[retained] - 1.0)))

    def block_support(self, q: int) -> Tuple[float, float]:
        """Smallest and largest physical |k| where the block multiplier is non-zero."""
        mult = self.block_multiplier(q)
        radius = self.grid.mode_radius[mult > 0] * self.grid.wavenumber_scale
        if radius.size == 0:
            return (float("nan"), float("nan"))
        return (float(radius.min()), float(radius.max()))


def build_partition(grid: Grid) -> DyadicPartition:
    q_max = top_block_index(grid)
    xi = grid.mode_radius
    mask = grid.dealias_mask
    blocks = [chi(xi) * mask]
    for q in range(0, q_max + 1):
        blocks.append(phi(xi / 2.0 ** q) * mask)
    return DyadicPartition(grid=grid, q_max=q_max, multipliers=tuple(blocks))


def _check_partition(f: RealField, partition: DyadicPartition):
    if f.grid != partition.grid:
        raise GridMismatchError("field and partition were built for different grids")


def delta_q(f: RealField, q: int, partition: DyadicPartition) -> RealField:
    _check_partition(f, partition)
    grid = f.grid
    coeffs = forward_coefficients(grid, f.samples)
    return RealField(grid, inverse_samples(grid, partition.block_multiplier(q) * coeffs))


def s_q(f: RealField, q: int, partition: DyadicPartition) -> RealField:
    _check_partition(f, partition)
    grid = f.grid
    coeffs = forward_coefficients(grid, f.samples)
    return RealField(grid, inverse_samples(grid, partition.low_pass_multiplier(q) * coeffs))


def block_samples(f: RealField, partition: DyadicPartition) -> List[np.ndarray]:
    """Physical samples of Δ_q f for q = -1 .. q_max, one transform in."""
    _check_partition(f, partition)
    grid = f.grid
    coeffs = forward_coefficients(grid, f.samples)
    return [inverse_samples(grid, m * coeffs) for m in partition.multipliers]


@dataclass
class DyadicDecomposition:
    grid: Grid
    blocks: List[Tuple[int, RealField]]

    def reconstruct(self) -> RealField:
        total = np.zeros_like(self.blocks[0][1].samples)
        for _, block in self.blocks:
            total = total + block.samples
        return RealField(self.grid, total)

    def block(self, q: int) -> RealField:
        for index, block in self.blocks:
            if index == q:
                return block
        raise RejectedInputError(f"no block with index {q}")


def decompose(f: RealField, partition: DyadicPartition) -> DyadicDecomposition:
    samples = block_samples(f, partition)
    return DyadicDecomposition(
        grid=f.grid,
        blocks=[(q, RealField(f.grid, s)) for q, s in zip(partition.q_range, samples)],
    )


def _l2(grid: Grid, samples: np.ndarray) -> float:
    return math.sqrt(grid.cell_volume * float(np.sum(samples ** 2)))


# ─── Diagnostics ─────────────────────────────────────────────────────────

@dataclass
class OrthogonalityReport:
    """Relative size of Δ_p Δ_q f for separated (|p-q| >= 2) and adjacent pairs."""
    max_far_ratio: float
    max_adjacent_ratio: float
    far_pairs: int


def check_almost_orthogonality(f: RealField, partition: DyadicPartition) -> OrthogonalityReport:
    _check_partition(f, partition)
    grid = f.grid
    coeffs = forward_coefficients(grid, f.samples)
    norm = _l2(grid, f.samples)
    far = adjacent = 0.0
    far_pairs = 0
    if norm == 0:
        return OrthogonalityReport(0.0, 0.0, 0)
    for p, q in itertools.combinations(partition.q_range, 2):
        both = partition.block_multiplier(p) * partition.block_multiplier(q)
        ratio = _l2(grid, inverse_samples(grid, both * coeffs)) / norm
        if abs(p - q) >= 2:
            far = max(far, ratio)
            far_pairs += 1
        else:
            adjacent = max(adjacent, ratio)
    return OrthogonalityReport(far, adjacent, far_pairs)


def check_product_support(f: RealField, g: RealField, partition: DyadicPartition,
                          separation: int = 5) -> float:
    """max over |p-q| >= separation of ||Δ_q(S_{p-1}f · Δ_p g)|| relative to the largest product norm."""
    _check_partition(f, partition)
    _check_partition(g, partition)
    grid = f.grid
    f_coeffs = forward_coefficients(grid, f.samples)
    g_coeffs = forward_coefficients(grid, g.samples)
    leak = 0.0
    scale = 0.0
    for p in range(1, partition.q_max + 1):
        low = inverse_samples(grid, partition.low_pass_multiplier(p - 1) * f_coeffs)
        high = inverse_samples(grid, partition.block_multiplier(p) * g_coeffs)
        product = low * high
        scale = max(scale, _l2(grid, product))
        product_coeffs = forward_coefficients(grid, product)
        for q in partition.q_range:
            if abs(p - q) >= separation:
                piece = inverse_samples(grid, partition.block_multiplier(q) * product_coeffs)
                leak = max(leak, _l2(grid, piece))
    return leak / scale if scale > 0 else 0.0


@dataclass
class BernsteinReport:
    order: int
    lower: float
    upper: float
    ratios: List[Tuple[int, float]]


def bernstein_check(fields: Sequence[RealField], partition: DyadicPartition, order: int = 1) -> BernsteinReport:
    """sup_{|α|=order} ||∂^α Δ_q f|| / ((2π/L · 2^q)^order ||Δ_q f||) over q >= 0."""
    if order < 1:
        raise ConfigurationError("derivative order must be at least 1")
    ratios: List[Tuple[int, float]] = []
    for f in fields:
        grid = f.grid
        scale = grid.wavenumber_scale
        for q, block in zip(partition.q_range, block_samples(f, partition)):
            if q < 0:
                continue
            base = _l2(grid, block)
            if base <= 1e-14 * max(1.0, _l2(grid, f.samples)):
                continue
            block_field = RealField(grid, block)
            best = 0.0
            for alpha in itertools.combinations_with_replacement(range(grid.dim), order):
                derived = block_field
                for axis in alpha:
                    derived = partial_derivative(derived, axis)
                best = max(best, _l2(grid, derived.samples))
            ratios.append((q, best / ((scale * 2.0 ** q) ** order * base)))
    if not ratios:
        return BernsteinReport(order, float("nan"), float("nan"), [])
    values = [r for _, r in ratios]
    return BernsteinReport(order, min(values), max(values), ratios)


def decomposition_table(f: RealField, partition: DyadicPartition, p: float = 2.0) -> pd.DataFrame:
    """Per-block L2 and L^p norms with the multiplier's wavenumber support."""
    grid = f.grid
    rows = []
    for q, block in zip(partition.q_range, block_samples(f, partition)):
        magnitude = np.sqrt(np.sum(block ** 2, axis=0))
        if math.isinf(p):
            lp = float(magnitude.max())
        else:
            lp = float((grid.cell_volume * np.sum(magnitude ** p)) ** (1.0 / p))
        k_min, k_max = partition.block_support(q)
        rows.append({"q": q, "L2_norm": _l2(grid, block), "Lp_norm": lp,
                     "support_min_k": k_min, "support_max_k": k_max})
    return pd.DataFrame(rows)
