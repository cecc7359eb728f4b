"""Lebesgue, Besov and Chemin–Lerner time-space norms of sampled fields."""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from errors import ConfigurationError, GridMismatchError, QuadratureError, RejectedInputError
from littlewood_paley import DyadicPartition, block_samples
from spectral_core import Grid, RealField, forward_coefficients

TIME_TOLERANCE = 1e-12


def critical_index(dim: int) -> float:
    """σ = 1 + N/2."""
    return 1.0 + dim / 2.0


def _check_exponent(value: float, name: str):
    if not (value >= 1 or math.isinf(value)):
        raise ConfigurationError(f"{name} must lie in [1, ∞], got {value}")


def _inverse(value: float) -> float:
    return 0.0 if math.isinf(value) else 1.0 / value


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float = 2.0
    r: float = 1.0

    def __post_init__(self):
        _check_exponent(self.p, "p")
        _check_exponent(self.r, "r")
        if not math.isfinite(self.s):
            raise ConfigurationError("smoothness index must be finite")

    def shifted(self, ds: float) -> "BesovParams":
        return BesovParams(self.s + ds, self.p, self.r)


@dataclass
class BesovNorm:
    value: float
    per_q: List[Tuple[int, float]]
    params: BesovParams

    @property
    def q_range(self) -> Tuple[int, int]:
        return (self.per_q[0][0], self.per_q[-1][0])


# ─── Time series ─────────────────────────────────────────────────────────

@dataclass
class TimeSeries:
    """Snapshots f(t_i) on a common grid; times start at 0 and increase strictly."""
    times: np.ndarray
    fields: List[RealField] = field(repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.fields) or not self.fields:
            raise RejectedInputError("a time series needs one field per time and at least one field")
        if abs(self.times[0]) > TIME_TOLERANCE:
            raise RejectedInputError(f"time series must start at t=0, got {self.times[0]}")
        if np.any(np.diff(self.times) <= 0):
            raise RejectedInputError("snapshot times must increase strictly")
        first = self.fields[0]
        for f in self.fields[1:]:
            if f.grid != first.grid:
                raise GridMismatchError("snapshots live on different grids")
            if f.components != first.components:
                raise RejectedInputError("snapshots have different component counts")

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> RealField:
        """Linear interpolation between the bracketing snapshots."""
        return RealField(self.grid, self.samples_at(t))

    def samples_at(self, t: float) -> np.ndarray:
        times = self.times
        if t < -TIME_TOLERANCE or t > times[-1] + TIME_TOLERANCE * max(1.0, times[-1]):
            raise RejectedInputError(f"t={t} outside [0, {times[-1]}]")
        if len(times) == 1:
            return self.fields[0].samples
        i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        w = (t - times[i]) / (times[i + 1] - times[i])
        w = min(max(w, 0.0), 1.0)
        return (1 - w) * self.fields[i].samples + w * self.fields[i + 1].samples

    def map(self, fn) -> "TimeSeries":
        return TimeSeries(self.times.copy(), [fn(f) for f in self.fields])

    def difference(self, other: "TimeSeries") -> "TimeSeries":
        """self - other sampled at self's times."""
        return TimeSeries(self.times.copy(),
                          [RealField(self.grid, f.samples - other.samples_at(t))
                           for t, f in zip(self.times, self.fields)])


# ─── Lebesgue norms ──────────────────────────────────────────────────────

def _lp_of_samples(grid: Grid, samples: np.ndarray, p: float) -> float:
    magnitude = np.sqrt(np.sum(samples ** 2, axis=0))
    if math.isinf(p):
        return float(magnitude.max())
    if p == 2:
        return math.sqrt(grid.cell_volume * float(np.sum(magnitude ** 2)))
    return float((grid.cell_volume * np.sum(magnitude ** p)) ** (1.0 / p))


def lp_norm(f: RealField, p: float) -> float:
    """Quadrature L^p norm of the pointwise Euclidean magnitude."""
    _check_exponent(p, "p")
    return _lp_of_samples(f.grid, f.samples, p)


def spectral_l2_norm(f: RealField) -> float:
    """L2 norm from the coefficients (Parseval)."""
    coeffs = forward_coefficients(f.grid, f.samples)
    return math.sqrt(f.grid.volume * float(np.sum(np.abs(coeffs) ** 2)))


def block_norms(f: RealField, partition: DyadicPartition, p: float = 2.0, method: str = "auto") -> np.ndarray:
    """||Δ_q f||_{L^p} for q = -1 .. q_max.

    ``method`` is "spectral" (p = 2 only, via Parseval), "physical" (quadrature)
    or "auto".
    """
    if f.grid != partition.grid:
        raise GridMismatchError("field and partition were built for different grids")
    if method not in ("auto", "spectral", "physical"):
        raise ConfigurationError(f"unknown norm method {method!r}")
    if method == "spectral" and p != 2:
        raise ConfigurationError("spectral block norms exist only for p = 2")
    grid = f.grid
    if p == 2 and method != "physical":
        power = np.sum(np.abs(forward_coefficients(grid, f.samples)) ** 2, axis=0)
        return np.array([math.sqrt(grid.volume * float(np.sum(m ** 2 * power))) for m in partition.multipliers])
    return np.array([_lp_of_samples(grid, b, p) for b in block_samples(f, partition)])


def _weights(partition: DyadicPartition, s: float) -> np.ndarray:
    return 2.0 ** (s * np.arange(-1, partition.q_max + 1))


def _sequence_norm(values: np.ndarray, r: float) -> float:
    if math.isinf(r):
        return float(np.max(values)) if values.size else 0.0
    return float(np.sum(values ** r) ** (1.0 / r))


def besov_norm(f: RealField, params: BesovParams, partition: DyadicPartition, method: str = "auto") -> BesovNorm:
    weighted = _weights(partition, params.s) * block_norms(f, partition, params.p, method)
    return BesovNorm(
        value=_sequence_norm(weighted, params.r),
        per_q=list(zip(partition.q_range, weighted.tolist())),
        params=params,
    )


def besov_value(f: RealField, params: BesovParams, partition: DyadicPartition) -> float:
    return besov_norm(f, params, partition).value


# ─── Time norms ──────────────────────────────────────────────────────────

def _time_norm(times: np.ndarray, values: np.ndarray, rho: float) -> np.ndarray:
    """L^rho over time along axis 0, trapezoidal rule for finite rho."""
    if math.isinf(rho):
        return np.max(values, axis=0)
    if len(times) < 2:
        raise QuadratureError("a finite time exponent needs at least two snapshots")
    return trapezoid(values ** rho, times, axis=0) ** (1.0 / rho)


def block_norm_matrix(series: TimeSeries, partition: DyadicPartition, p: float = 2.0) -> np.ndarray:
    """Rows are snapshots, columns are blocks q = -1 .. q_max."""
    return np.stack([block_norms(f, partition, p) for f in series.fields])


def chemin_lerner_norm(series: TimeSeries, params: BesovParams, rho: float,
                       partition: DyadicPartition) -> float:
    """|| 2^{qs} ||Δ_q f||_{L^rho_T(L^p)} ||_{ℓ^r}."""
    _check_exponent(rho, "rho")
    per_q = _time_norm(series.times, block_norm_matrix(series, partition, params.p), rho)
    return _sequence_norm(_weights(partition, params.s) * per_q, params.r)


def time_outer_norm(series: TimeSeries, params: BesovParams, rho: float, partition: DyadicPartition) -> float:
    """|| ||f(t)||_{B^s_{p,r}} ||_{L^rho_T}."""
    _check_exponent(rho, "rho")
    values = np.array([besov_value(f, params, partition) for f in series.fields])
    return float(_time_norm(series.times, values, rho))


def time_lebesgue_norm(series: TimeSeries, p: float, rho: float) -> float:
    """|| ||f(t)||_{L^p} ||_{L^rho_T}."""
    _check_exponent(p, "p")
    _check_exponent(rho, "rho")
    values = np.array([lp_norm(f, p) for f in series.fields])
    return float(_time_norm(series.times, values, rho))


@dataclass
class MinkowskiReport:
    chemin_lerner: float
    time_outer: float
    expected: str
    holds: bool


def check_minkowski_orderings(series: TimeSeries, params: BesovParams, rho: float,
                              partition: DyadicPartition, rel_tol: float = 1e-12) -> MinkowskiReport:
    """r >= rho puts the Chemin–Lerner norm below the outer norm; r <= rho above it."""
    cl = chemin_lerner_norm(series, params, rho, partition)
    outer = time_outer_norm(series, params, rho, partition)
    slack = rel_tol * max(cl, outer, 1e-300)
    if params.r == rho:
        expected, holds = "==", abs(cl - outer) <= slack
    elif params.r > rho:
        expected, holds = "<=", cl <= outer + slack
    else:
        expected, holds = ">=", cl >= outer - slack
    return MinkowskiReport(cl, outer, expected, bool(holds))


# ─── Embeddings ──────────────────────────────────────────────────────────

@dataclass
class EmbeddingReport:
    """Per-field ratios for each embedding; ``bounds`` holds the analytic constant where one is known."""
    ensemble_size: int
    ratios: Dict[str, List[float]]
    bounds: Dict[str, float]

    @property
    def sup(self) -> Dict[str, float]:
        return {name: max(values) if values else 0.0 for name, values in self.ratios.items()}


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return 0.0
    return num / den


def check_embeddings(fields: Sequence[RealField], partition: DyadicPartition, s: float = 1.0,
                     p: float = 2.0, r: float = 1.0) -> EmbeddingReport:
    dim = partition.grid.dim
    names = ["r_monotone", "s_shift", "p_shift", "linf"]
    ratios: Dict[str, List[float]] = {name: [] for name in names}
    for f in fields:
        base = besov_value(f, BesovParams(s, p, r), partition)
        looser_r = besov_value(f, BesovParams(s, p, math.inf), partition)
        ratios["r_monotone"].append(_ratio(looser_r, base))
        ratios["s_shift"].append(_ratio(besov_value(f, BesovParams(s - 1, p, r), partition), base))
        shifted = s - dim * (_inverse(p) - _inverse(math.inf))
        ratios["p_shift"].append(_ratio(besov_value(f, BesovParams(shifted, math.inf, r), partition), base))
        critical = besov_value(f, BesovParams(dim * _inverse(p), p, 1.0), partition)
        ratios["linf"].append(_ratio(lp_norm(f, math.inf), critical))
    bounds = {"r_monotone": 1.0, "s_shift": 2.0, "p_shift": float("nan"), "linf": float("nan")}
    return EmbeddingReport(len(fields), ratios, bounds)


# ─── Reports ─────────────────────────────────────────────────────────────

def _exponent(value: float):
    return "inf" if math.isinf(value) else value


def norm_report(norm: BesovNorm) -> dict:
    return {
        "params": {"s": norm.params.s, "p": _exponent(norm.params.p), "r": _exponent(norm.params.r)},
        "q_range": list(norm.q_range),
        "per_q": [{"q": q, "weighted_norm": v} for q, v in norm.per_q],
        "value": norm.value,
    }


def write_norm_report(path: Union[str, Path], norm: BesovNorm) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".csv":
        pd.DataFrame(norm.per_q, columns=["q", "weighted_norm"]).to_csv(path, index=False)
    else:
        path.write_text(json.dumps(norm_report(norm), indent=2))
    return path
