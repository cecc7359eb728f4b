"""Paraproduct/remainder split and empirical witnesses for the product, commutator,
composition and remainder estimates.

Every check returns an ``InequalityReport``: the ratio LHS/RHS for each member of
an ensemble of band-limited random fields. A bounded sup ratio that stays put
under grid refinement is the evidence; a single ratio proves nothing.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from besov_norms import (
    BesovParams,
    TimeSeries,
    _inverse,
    besov_value,
    chemin_lerner_norm,
    lp_norm,
    time_lebesgue_norm,
)
from errors import ComponentMismatchError, ConfigurationError, GridMismatchError, RejectedInputError
from littlewood_paley import DyadicPartition, block_samples
from spectral_core import (
    Grid,
    RealField,
    dealias,
    dealiased_product_samples,
    divergence,
    forward_coefficients,
    gradient,
    inverse_samples,
    partial_derivative,
)

RHO_LIMIT = 50.0


@dataclass
class InequalityReport:
    name: str
    ensemble_size: int
    ratios: List[float]
    per_q_cq: Optional[List[float]] = None
    breakdown: Dict[str, float] = field(default_factory=dict)

    @property
    def sup_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "ensemble_size": self.ensemble_size,
            "sup_ratio": self.sup_ratio,
            "ratios": self.ratios,
            "per_q_cq": self.per_q_cq,
            "breakdown": self.breakdown,
        }


def _check_pair(f: RealField, g: RealField, partition: DyadicPartition):
    if f.grid != g.grid or f.grid != partition.grid:
        raise GridMismatchError("operands and partition must share one grid")
    if not (f.is_scalar or g.is_scalar or f.components == g.components):
        raise ComponentMismatchError(f"cannot multiply {f.components} by {g.components} components")


def _ratio(lhs: float, rhs: float) -> float:
    if rhs == 0:
        return 0.0
    return lhs / rhs


# ─── Bony decomposition ──────────────────────────────────────────────────

def _paraproduct_samples(f_blocks: List[np.ndarray], g_blocks: List[np.ndarray]) -> np.ndarray:
    """Σ_{q>=1} S_{q-1}f · Δ_q g with S_{q-1} = Σ_{p<=q-2} Δ_p; list index is q + 1."""
    total = np.zeros(np.broadcast_shapes(f_blocks[0].shape, g_blocks[0].shape))
    low = np.zeros_like(f_blocks[0])
    for index in range(2, len(g_blocks)):
        low = low + f_blocks[index - 2]
        total = total + low * g_blocks[index]
    return total


def _remainder_samples(f_blocks: List[np.ndarray], g_blocks: List[np.ndarray]) -> np.ndarray:
    """Σ_q Δ_q f · (Δ_{q-1} + Δ_q + Δ_{q+1}) g."""
    total = np.zeros(np.broadcast_shapes(f_blocks[0].shape, g_blocks[0].shape))
    count = len(g_blocks)
    for index, fb in enumerate(f_blocks):
        near = g_blocks[index]
        if index > 0:
            near = near + g_blocks[index - 1]
        if index + 1 < count:
            near = near + g_blocks[index + 1]
        total = total + fb * near
    return total


def paraproduct(f: RealField, g: RealField, partition: DyadicPartition) -> RealField:
    """T_f g, dealiased."""
    _check_pair(f, g, partition)
    raw = _paraproduct_samples(block_samples(f, partition), block_samples(g, partition))
    return RealField(f.grid, dealiased_product_samples(f.grid, raw))


def remainder(f: RealField, g: RealField, partition: DyadicPartition) -> RealField:
    """R(f, g), dealiased."""
    _check_pair(f, g, partition)
    raw = _remainder_samples(block_samples(f, partition), block_samples(g, partition))
    return RealField(f.grid, dealiased_product_samples(f.grid, raw))


@dataclass
class BonySplit:
    t_f_g: RealField
    t_g_f: RealField
    r_f_g: RealField
    product: RealField

    def reconstruction_error(self) -> float:
        """max |T_f g + T_g f + R(f,g) - fg| relative to max |fg|."""
        total = self.t_f_g.samples + self.t_g_f.samples + self.r_f_g.samples
        scale = max(float(np.max(np.abs(self.product.samples))), 1e-300)
        return float(np.max(np.abs(total - self.product.samples))) / scale


def bony_split(f: RealField, g: RealField, partition: DyadicPartition) -> BonySplit:
    """All three pieces and the dealiased product of the dealiased factors, from one block pass."""
    _check_pair(f, g, partition)
    grid = f.grid
    fb = block_samples(f, partition)
    gb = block_samples(g, partition)
    f_low = np.sum(fb, axis=0)
    g_low = np.sum(gb, axis=0)

    def finish(raw):
        return RealField(grid, dealiased_product_samples(grid, raw))

    return BonySplit(
        t_f_g=finish(_paraproduct_samples(fb, gb)),
        t_g_f=finish(_paraproduct_samples(gb, fb)),
        r_f_g=finish(_remainder_samples(fb, gb)),
        product=finish(f_low * g_low),
    )


# ─── Random ensembles ────────────────────────────────────────────────────

def random_bandlimited_field(grid: Grid, rng: np.random.Generator, slope: float = -2.0,
                             components: int = 1, band: Optional[float] = None) -> RealField:
    """Zero-mean random field, spectrum ∝ |m|^slope for |m| <= band, max |f| = 1.

    ``band`` defaults to the dealiasing radius; half of it keeps every product of
    two members exactly representable.
    """
    noise = rng.standard_normal((components,) + grid.shape)
    coeffs = forward_coefficients(grid, noise)
    radius = grid.mode_radius
    amplitude = np.zeros_like(radius)
    nonzero = radius > 0
    amplitude[nonzero] = radius[nonzero] ** slope
    if band is not None:
        amplitude[radius > band] = 0.0
    samples = inverse_samples(grid, coeffs * amplitude * grid.dealias_mask)
    peak = float(np.max(np.abs(samples)))
    if peak > 0:
        samples = samples / peak
    return RealField(grid, samples)


def random_ensemble(grid: Grid, size: int, seed: int = 0, components: Tuple[int, int] = (1, 1),
                    slopes: Sequence[float] = (-1.0, -2.0, -3.0),
                    band: Optional[float] = None) -> List[Tuple[RealField, RealField]]:
    """Pairs (f, g) with spectral slopes drawn from ``slopes``."""
    if size < 1:
        raise ConfigurationError("ensemble size must be positive")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(size):
        f = random_bandlimited_field(grid, rng, float(rng.choice(slopes)), components[0], band)
        g = random_bandlimited_field(grid, rng, float(rng.choice(slopes)), components[1], band)
        pairs.append((f, g))
    return pairs


def _sup_ratio_pairs(pairs, fn: Callable[[RealField, RealField], Tuple[float, float]]) -> List[float]:
    return [_ratio(*fn(f, g)) for f, g in pairs]


# ─── Product and commutator estimates ────────────────────────────────────

def moser_check_classical(pairs: Sequence[Tuple[RealField, RealField]], params: BesovParams,
                          partition: DyadicPartition) -> InequalityReport:
    """||fg||_{B^s} / (||f||_{L∞}||g||_{B^s} + ||g||_{L∞}||f||_{B^s})."""
    if params.s <= 0:
        raise ConfigurationError("the product estimate needs s > 0")

    def one(f, g):
        _check_pair(f, g, partition)
        product = RealField(f.grid, dealiased_product_samples(f.grid, f.samples * g.samples))
        lhs = besov_value(product, params, partition)
        rhs = (lp_norm(f, math.inf) * besov_value(g, params, partition)
               + lp_norm(g, math.inf) * besov_value(f, params, partition))
        return lhs, rhs

    return InequalityReport("moser_classical", len(pairs), _sup_ratio_pairs(pairs, one))


def _holder_exponents_ok(p: float, left: float, right: float) -> bool:
    return math.isclose(_inverse(p), _inverse(left) + _inverse(right), abs_tol=1e-12)


def moser_check_generalized(pairs: Sequence[Tuple[RealField, RealField]], s: float, p: float,
                            exponents: Tuple[float, float, float, float], r: float,
                            partition: DyadicPartition) -> InequalityReport:
    """||fg||_{B^s_{p,r}} / (||f||_{L^p1}||g||_{B^s_{p2,r}} + ||g||_{L^p3}||f||_{B^s_{p4,r}}).

    The breakdown compares T_f g, T_g f and R(f,g) against their own Hölder-split
    right-hand sides.
    """
    allowed = (1.0, 2.0, math.inf)
    p1, p2, p3, p4 = exponents
    if s <= 0:
        raise ConfigurationError("the product estimate needs s > 0")
    if any(e not in allowed for e in (p, p1, p2, p3, p4)):
        raise ConfigurationError("Lebesgue exponents must be 1, 2 or ∞")
    if not (_holder_exponents_ok(p, p1, p2) and _holder_exponents_ok(p, p3, p4)):
        raise ConfigurationError("exponents must satisfy 1/p = 1/p1 + 1/p2 = 1/p3 + 1/p4")
    target = BesovParams(s, p, r)
    ratios: List[float] = []
    pieces = {"T_f_g": 0.0, "T_g_f": 0.0, "R": 0.0}
    for f, g in pairs:
        _check_pair(f, g, partition)
        split = bony_split(f, g, partition)
        f_lp1, g_lp3 = lp_norm(f, p1), lp_norm(g, p3)
        g_b = besov_value(g, BesovParams(s, p2, r), partition)
        f_b = besov_value(f, BesovParams(s, p4, r), partition)
        lhs = besov_value(split.product, target, partition)
        ratios.append(_ratio(lhs, f_lp1 * g_b + g_lp3 * f_b))
        pieces["T_f_g"] = max(pieces["T_f_g"], _ratio(besov_value(split.t_f_g, target, partition), f_lp1 * g_b))
        pieces["T_g_f"] = max(pieces["T_g_f"], _ratio(besov_value(split.t_g_f, target, partition), g_lp3 * f_b))
        pieces["R"] = max(pieces["R"], _ratio(besov_value(split.r_f_g, target, partition), f_lp1 * g_b))
    return InequalityReport("moser_generalized", len(pairs), ratios, breakdown=pieces)


COMMUTATOR_CASES = ("critical", "g_smoother", "f_smoother")


def commutator_check(pairs: Sequence[Tuple[RealField, RealField]], params: BesovParams,
                     partition: DyadicPartition, case: str = "critical") -> InequalityReport:
    """Σ_q 2^{qs} ||[f, Δ_q]Ag||_{L2} over the matching product of norms.

    A is the divergence for vector g and the gradient for scalar g. ``case``
    picks the right-hand side: "critical" needs s = 1 + N/2, while
    "g_smoother" and "f_smoother" need s = N/2 and put one extra derivative on
    g or f.
    """
    dim = partition.grid.dim
    if case not in COMMUTATOR_CASES:
        raise ConfigurationError(f"unknown commutator case {case!r}")
    if params.p != 2 or params.r != 1:
        raise ConfigurationError("the commutator estimate is stated for p = 2, r = 1")
    wanted = 1 + dim / 2 if case == "critical" else dim / 2
    if not math.isclose(params.s, wanted, abs_tol=1e-12):
        raise ConfigurationError(f"case {case!r} needs s = {wanted}, got {params.s}")
    s = params.s
    weights = 2.0 ** (s * np.arange(-1, partition.q_max + 1))
    ratios: List[float] = []
    cq_sup = np.zeros(partition.q_max + 2)
    for f, g in pairs:
        if f.grid != partition.grid or g.grid != partition.grid:
            raise GridMismatchError("operands and partition must share one grid")
        if not f.is_scalar:
            raise ComponentMismatchError("the commutator coefficient must be scalar")
        if g.is_scalar and dim > 1:
            ag = gradient(g)
        elif g.components == dim:
            ag = divergence(g)
        else:
            raise ComponentMismatchError(f"cannot apply A to a {g.components}-component field")
        grid = f.grid
        ag_blocks = block_samples(ag, partition)
        product = RealField(grid, dealiased_product_samples(grid, f.samples * ag.samples))
        product_blocks = block_samples(product, partition)
        comm = np.array([
            math.sqrt(grid.cell_volume * float(np.sum(
                (dealiased_product_samples(grid, f.samples * ab) - pb) ** 2)))
            for ab, pb in zip(ag_blocks, product_blocks)
        ])
        base = BesovParams(s)
        up = BesovParams(s + 1)
        if case == "critical":
            rhs = besov_value(f, base, partition) * besov_value(g, base, partition)
        elif case == "g_smoother":
            rhs = besov_value(f, base, partition) * besov_value(g, up, partition)
        else:
            rhs = besov_value(f, up, partition) * besov_value(g, base, partition)
        cq = weights * comm / rhs if rhs > 0 else np.zeros_like(comm)
        cq_sup = np.maximum(cq_sup, cq)
        ratios.append(float(np.sum(cq)))
    return InequalityReport(f"commutator_{case}", len(pairs), ratios, per_q_cq=cq_sup.tolist())


def remainder_regularity_check(pairs: Sequence[Tuple[RealField, RealField]], s1: float, s2: float,
                               partition: DyadicPartition, p: float = 1.0, p1: float = 2.0,
                               p2: float = 2.0, r: float = 1.0) -> InequalityReport:
    """||R(f,g)||_{B^{s1+s2+N(1/p-1/p1-1/p2)}_{p,r}} / (||f||_{B^{s1}_{p1,r}} ||g||_{B^{s2}_{p2,r}})."""
    if s1 + s2 <= 0:
        raise ConfigurationError("the remainder estimate needs s1 + s2 > 0")
    if not (_inverse(p) <= _inverse(p1) + _inverse(p2) + 1e-12 and _inverse(p1) + _inverse(p2) <= 1 + 1e-12):
        raise ConfigurationError("exponents must satisfy 1/p <= 1/p1 + 1/p2 <= 1")
    dim = partition.grid.dim
    index = s1 + s2 + dim * (_inverse(p) - _inverse(p1) - _inverse(p2))

    def one(f, g):
        lhs = besov_value(remainder(f, g, partition), BesovParams(index, p, r), partition)
        rhs = besov_value(f, BesovParams(s1, p1, r), partition) * besov_value(g, BesovParams(s2, p2, r), partition)
        return lhs, rhs

    return InequalityReport("remainder", len(pairs), _sup_ratio_pairs(pairs, one))


def derivative_check(fields: Sequence[RealField], params: BesovParams, partition: DyadicPartition) -> InequalityReport:
    """max_j ||∂_j f||_{B^s} / ||f||_{B^{s+1}}."""
    ratios = []
    for f in fields:
        rhs = besov_value(f, params.shifted(1), partition)
        lhs = max(besov_value(partial_derivative(f, j), params, partition) for j in range(f.grid.dim))
        ratios.append(_ratio(lhs, rhs))
    return InequalityReport("derivative", len(fields), ratios)


# ─── Composition ─────────────────────────────────────────────────────────

def _check_overflow(rho: RealField):
    if float(np.max(np.abs(rho.samples))) > RHO_LIMIT:
        raise RejectedInputError(f"|rho| exceeds {RHO_LIMIT:g}; exp(rho) would lose all precision")


def compose_h1(rho: RealField, gamma: float, kappa: float, n_bar: float) -> RealField:
    """((γ-1)κ/n̄)(1 - e^{-ρ}), dealiased."""
    if not rho.is_scalar:
        raise ComponentMismatchError("compose_h1 needs a scalar field")
    _check_overflow(rho)
    scale = (gamma - 1) * kappa / n_bar
    return dealias(RealField(rho.grid, scale * -np.expm1(-rho.samples)))


def compose_h2(rho: RealField, n_bar: float) -> RealField:
    """n̄(e^{ρ} - 1), dealiased."""
    if not rho.is_scalar:
        raise ComponentMismatchError("compose_h2 needs a scalar field")
    _check_overflow(rho)
    return dealias(RealField(rho.grid, n_bar * np.expm1(rho.samples)))


def composition_check(fields: Sequence[RealField], compose: Callable[[RealField], RealField],
                      params: BesovParams, partition: DyadicPartition, name: str = "composition") -> InequalityReport:
    """||F(ρ)||_{B^s} / ((1 + ||ρ||_{L∞})^{⌊s⌋+1} ||ρ||_{B^s}) for F smooth with F(0) = 0."""
    if params.s <= 0:
        raise ConfigurationError("the composition estimate needs s > 0")
    power = math.floor(params.s) + 1
    ratios = []
    for rho in fields:
        lhs = besov_value(compose(rho), params, partition)
        rhs = (1 + lp_norm(rho, math.inf)) ** power * besov_value(rho, params, partition)
        ratios.append(_ratio(lhs, rhs))
    return InequalityReport(name, len(fields), ratios)


# ─── Time-space product estimate ─────────────────────────────────────────

def _series_product(a: TimeSeries, b: TimeSeries) -> TimeSeries:
    grid = a.grid
    return TimeSeries(a.times.copy(), [
        RealField(grid, dealiased_product_samples(grid, fa.samples * b.samples_at(t)))
        for t, fa in zip(a.times, a.fields)
    ])


def moser_check_chemin_lerner(series_pairs: Sequence[Tuple[TimeSeries, TimeSeries]], s: float,
                              rho: float, exponents: Tuple[float, float, float, float],
                              partition: DyadicPartition) -> InequalityReport:
    """||fg||_{L̃^ρ(B^s)} / (||f||_{L^ρ1(L∞)}||g||_{L̃^ρ2(B^s)} + ||g||_{L^ρ3(L∞)}||f||_{L̃^ρ4(B^s)})."""
    r1, r2, r3, r4 = exponents
    if s <= 0:
        raise ConfigurationError("the product estimate needs s > 0")
    if not (_holder_exponents_ok(rho, r1, r2) and _holder_exponents_ok(rho, r3, r4)):
        raise ConfigurationError("time exponents must satisfy 1/ρ = 1/ρ1 + 1/ρ2 = 1/ρ3 + 1/ρ4")
    params = BesovParams(s)
    ratios = []
    for f, g in series_pairs:
        lhs = chemin_lerner_norm(_series_product(f, g), params, rho, partition)
        rhs = (time_lebesgue_norm(f, math.inf, r1) * chemin_lerner_norm(g, params, r2, partition)
               + time_lebesgue_norm(g, math.inf, r3) * chemin_lerner_norm(f, params, r4, partition))
        ratios.append(_ratio(lhs, rhs))
    return InequalityReport("moser_chemin_lerner", len(series_pairs), ratios)


def refinement_stability(coarse: InequalityReport, fine: InequalityReport) -> float:
    """Relative change of the sup ratio between two resolutions."""
    base = coarse.sup_ratio
    if base == 0:
        return 0.0 if fine.sup_ratio == 0 else math.inf
    return abs(fine.sup_ratio - base) / base
