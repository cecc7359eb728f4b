"""Transformed heat-conducting Euler–Poisson system: variable change, Picard
iteration, convergence monitors and the uniqueness experiment.

Unknowns are ρ = ln n - ln n̄, u, θ = T - T_L and E = ∇Φ. Iterate m+1 solves
four linear problems whose coefficients and sources come from iterate m,
starting from the zero iterate, with initial data low-passed by S_{m+1}.
"""
import dataclasses
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from besov_norms import BesovParams, TimeSeries, besov_value, chemin_lerner_norm, critical_index
from bony_calculus import compose_h1, compose_h2, random_bandlimited_field
from errors import (
    BlowUpError,
    ComponentMismatchError,
    ConfigurationError,
    DivergenceError,
    GridMismatchError,
    QuadratureError,
    RejectedInputError,
    VacuumError,
)
from linear_solvers import (
    Scheme,
    TimeStepper,
    solve_acoustic_transport,
    solve_e_evolution,
    solve_heat,
)
from littlewood_paley import DyadicPartition, build_partition, s_q
from shared.parallel import run_parallel
from spectral_core import (
    Grid,
    RealField,
    advect,
    curl_norm,
    divergence,
    dot,
    gradient,
    inverse_laplacian,
    inverse_laplacian_gradient,
    laplacian,
    leray_type_projection,
    multiply,
)

CONSTRAINT_EPS = 1e-14
GROWTH_WINDOW = 3
RETAINED_ITERATES = 12


# ─── Parameters and states ───────────────────────────────────────────────

@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants. Relaxation times and the Debye length stay at 1.

    ``h1_sign`` multiplies the h₁(ρ)Δθ term of the temperature equation; +1 is
    the form the iteration is usually written in, -1 is the form obtained by
    dividing the conduction term (γ-1)κΔT by n.
    """
    gamma: float = 5.0 / 3.0
    kappa: float = 1.0
    n_bar: float = 1.0
    T_L: float = 1.0
    tau_p: float = 1.0
    tau_w: float = 1.0
    debye_length: float = 1.0
    h1_sign: float = 1.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ConfigurationError(f"adiabatic exponent must exceed 1, got {self.gamma}")
        for name in ("kappa", "n_bar", "T_L"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be positive, got {value}")
        for name in ("tau_p", "tau_w", "debye_length"):
            if getattr(self, name) != 1.0:
                raise ConfigurationError(f"{name} is fixed to 1 in the transformed system")
        if self.h1_sign not in (1.0, -1.0):
            raise ConfigurationError("h1_sign must be +1 or -1")

    @property
    def kappa_tilde(self) -> float:
        return (self.gamma - 1) * self.kappa / self.n_bar

    def with_kappa_tilde(self, kappa_tilde: float) -> "PhysicalParams":
        return dataclasses.replace(self, kappa=kappa_tilde * self.n_bar / (self.gamma - 1))

    @classmethod
    def for_horizon(cls, T: float, **kwargs) -> "PhysicalParams":
        """Parameters with κ̃ = (1+T)/T, the smallest diffusivity the contraction argument allows."""
        base = cls(**kwargs)
        return base.with_kappa_tilde((1 + T) / T)


@dataclass(frozen=True)
class EPState:
    rho: RealField
    u: RealField
    theta: RealField
    E: RealField
    time: float = 0.0

    def __post_init__(self):
        grid = self.rho.grid
        if any(f.grid != grid for f in (self.u, self.theta, self.E)):
            raise GridMismatchError("state components live on different grids")
        if not (self.rho.is_scalar and self.theta.is_scalar):
            raise ComponentMismatchError("rho and theta must be scalar fields")
        if self.u.components != grid.dim or self.E.components != grid.dim:
            raise ComponentMismatchError("u and E must be vector fields")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0) -> "EPState":
        return cls(RealField.zeros(grid), RealField.zeros(grid, grid.dim),
                   RealField.zeros(grid), RealField.zeros(grid, grid.dim), time)

    def fields(self) -> Tuple[RealField, RealField, RealField, RealField]:
        return (self.rho, self.u, self.theta, self.E)

    def map(self, fn: Callable[[RealField], RealField]) -> "EPState":
        return EPState(*(fn(f) for f in self.fields()), time=self.time)

    def __sub__(self, other: "EPState") -> "EPState":
        return EPState(*(a - b for a, b in zip(self.fields(), other.fields())), time=self.time)

    def curl_residual(self) -> float:
        """||curl E|| relative to ||E||."""
        magnitude = math.sqrt(self.grid.cell_volume * float(np.sum(self.E.samples ** 2)))
        return curl_norm(self.E) / magnitude if magnitude > 0 else 0.0


@dataclass
class PhysicalFields:
    n: RealField
    u: RealField
    temperature: RealField
    potential: RealField
    E: RealField


def to_transformed(n: RealField, u: RealField, temperature: RealField, params: PhysicalParams,
                   time: float = 0.0, warn: bool = True) -> EPState:
    """(n, u, T) -> (ρ, u, θ, E) with E = ∇Δ⁻¹(n - n̄)."""
    if float(np.min(n.samples)) <= 0:
        raise VacuumError("density must be strictly positive")
    rho = RealField(n.grid, np.log(n.samples) - math.log(params.n_bar))
    theta = temperature - params.T_L
    E = inverse_laplacian_gradient(n - params.n_bar, warn=warn)
    return EPState(rho, u, theta, E, time)


def from_transformed(state: EPState, params: PhysicalParams) -> PhysicalFields:
    n = RealField(state.grid, params.n_bar * np.exp(state.rho.samples))
    potential = inverse_laplacian(divergence(state.E), warn=False)
    return PhysicalFields(n=n, u=state.u, temperature=state.theta + params.T_L,
                          potential=potential, E=state.E)


def mollify_initial(data0: EPState, m: int, partition: DyadicPartition) -> EPState:
    """Initial data of iterate m+1: every component low-passed by S_{m+1}."""
    if m < 0:
        raise ConfigurationError(f"iteration index must be non-negative, got {m}")
    return data0.map(lambda f: s_q(f, m + 1, partition))


def mollification_tail_constants(f: RealField, partition: DyadicPartition) -> List[float]:
    """C_m = ||S_{m+1}f - f||_{B^{σ-1}} / (2^{-m}||f||_{B^σ}) for m = 0 .. q_max - 1."""
    sigma = critical_index(f.grid.dim)
    top = besov_value(f, BesovParams(sigma), partition)
    if top == 0:
        return [0.0] * partition.q_max
    out = []
    for m in range(partition.q_max):
        tail = besov_value(f - s_q(f, m + 1, partition), BesovParams(sigma - 1), partition)
        out.append(tail / (2.0 ** (-m) * top))
    return out


# ─── State series ────────────────────────────────────────────────────────

@dataclass
class StateSeries:
    rho: TimeSeries
    u: TimeSeries
    theta: TimeSeries
    E: TimeSeries

    def __post_init__(self):
        times = self.rho.times
        for part in (self.u, self.theta, self.E):
            if len(part.times) != len(times) or not np.allclose(part.times, times, rtol=0, atol=1e-12):
                raise GridMismatchError("state components are sampled at different times")

    @property
    def times(self) -> np.ndarray:
        return self.rho.times

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    @property
    def horizon(self) -> float:
        return self.rho.horizon

    def __len__(self) -> int:
        return len(self.rho)

    def components(self) -> Tuple[TimeSeries, TimeSeries, TimeSeries, TimeSeries]:
        return (self.rho, self.u, self.theta, self.E)

    def state(self, i: int) -> EPState:
        return EPState(self.rho.fields[i], self.u.fields[i], self.theta.fields[i], self.E.fields[i],
                       float(self.times[i]))

    def states(self) -> List[EPState]:
        return [self.state(i) for i in range(len(self))]

    def at(self, t: float) -> EPState:
        return EPState(*(part.at(t) for part in self.components()), time=t)

    def difference(self, other: "StateSeries") -> "StateSeries":
        return StateSeries(*(a.difference(b) for a, b in zip(self.components(), other.components())))

    @classmethod
    def zeros(cls, grid: Grid, times: np.ndarray) -> "StateSeries":
        def const(components):
            return TimeSeries(np.asarray(times), [RealField.zeros(grid, components) for _ in times])
        return cls(const(1), const(grid.dim), const(1), const(grid.dim))

    @classmethod
    def from_states(cls, states: Sequence[EPState]) -> "StateSeries":
        times = np.array([s.time for s in states])
        return cls(*(TimeSeries(times, [s.fields()[j] for s in states]) for j in range(4)))


# ─── The system ──────────────────────────────────────────────────────────

def tendency(state: EPState, params: PhysicalParams) -> EPState:
    """Right-hand side F of ∂_t(ρ, u, θ, E) = F(ρ, u, θ, E), products dealiased."""
    rho, u, theta, E = state.fields()
    gamma = params.gamma
    grad_rho = gradient(rho)
    div_u = divergence(u)
    lap_theta = laplacian(theta)
    d_rho = -(dot(u, grad_rho) + div_u)
    d_u = (-(params.T_L * grad_rho) - advect(u, u) - gradient(theta)
           - multiply(theta, grad_rho) + E - u)
    d_theta = (params.kappa_tilde * lap_theta
               + _explicit_temperature_terms(rho, u, theta, lap_theta, div_u, params))
    flux = multiply(compose_h2(rho, params.n_bar), u) + params.n_bar * u
    d_E = -leray_type_projection(flux)
    return EPState(d_rho, d_u, d_theta, d_E, state.time)


def _explicit_temperature_terms(rho, u, theta, lap_theta, div_u, params: PhysicalParams) -> RealField:
    """-u·∇θ ± h₁(ρ)Δθ - (γ-1)(T_L+θ)div u + (γ-1)/2|u|² - θ."""
    gm1 = params.gamma - 1
    return (-dot(u, gradient(theta))
            + params.h1_sign * multiply(compose_h1(rho, params.gamma, params.kappa, params.n_bar), lap_theta)
            - gm1 * (params.T_L * div_u + multiply(theta, div_u))
            + (gm1 / 2) * dot(u, u)
            - theta)


@dataclass
class IterateForcing:
    """Coefficients and sources the next iterate reads from the current one."""
    velocity: TimeSeries
    u_source: TimeSeries
    theta_source: TimeSeries
    flux: TimeSeries


def iterate_forcing(prev: StateSeries, params: PhysicalParams) -> IterateForcing:
    u_source, theta_source, flux = [], [], []
    for state in prev.states():
        rho, u, theta, E = state.fields()
        grad_rho = gradient(rho)
        u_source.append(-gradient(theta) - multiply(theta, grad_rho) + E - u)
        theta_source.append(_explicit_temperature_terms(rho, u, theta, laplacian(theta), divergence(u), params))
        flux.append(multiply(compose_h2(rho, params.n_bar), u) + params.n_bar * u)
    times = prev.times
    return IterateForcing(
        velocity=prev.u,
        u_source=TimeSeries(times, u_source),
        theta_source=TimeSeries(times, theta_source),
        flux=TimeSeries(times, flux),
    )


Source = Callable[[float], EPState]


def _plus_source(series: TimeSeries, source: Optional[Source], pick: Callable[[EPState], RealField]):
    if source is None:
        return series
    grid = series.grid
    return lambda t: RealField(grid, series.samples_at(t) + pick(source(t)).samples)


def picard_step(prev: Optional[StateSeries], data0: EPState, m: int, params: PhysicalParams,
                ts: TimeStepper, partition: DyadicPartition, source: Optional[Source] = None,
                workers: Optional[int] = None, verbose: bool = False) -> StateSeries:
    """Iterate m+1 from iterate m (``prev``; None is the zero iterate).

    The (ρ, u), θ and E problems are independent given iterate m and run side by side.
    ``source`` adds a known forcing to every equation.
    """
    grid = data0.grid
    init = mollify_initial(data0, m, partition)
    if prev is None:
        prev = StateSeries.zeros(grid, ts.snapshot_times())
    try:
        forcing = iterate_forcing(prev, params)
    except RejectedInputError as exc:
        raise DivergenceError(m + 1, None, f"iterate {m} left the admissible range ({exc})") from exc
    rho_source = None if source is None else (lambda t: source(t).rho)
    e_source = None if source is None else (lambda t: source(t).E)
    calls = [
        partial(solve_acoustic_transport, init.rho, init.u, forcing.velocity,
                _plus_source(forcing.u_source, source, lambda s: s.u), params.T_L, ts,
                forcing_rho=rho_source),
        partial(solve_heat, init.theta, params.kappa_tilde,
                _plus_source(forcing.theta_source, source, lambda s: s.theta),
                ts.replace(scheme=Scheme.EXPONENTIAL_RK4)),
        partial(solve_e_evolution, init.E, forcing.flux, ts, source=e_source),
    ]
    try:
        (rho, u), theta, E = run_parallel(calls, workers)
    except BlowUpError as exc:
        raise DivergenceError(m + 1, exc.time, f"retry with T = {ts.t_end / 2:.4g}") from exc
    if verbose:
        print(f"   iterate {m + 1}: {len(rho)} snapshots to t={rho.horizon:.4g}")
    return StateSeries(rho, u, theta, E)


# ─── Monitors ────────────────────────────────────────────────────────────

def step2_metric(series: StateSeries, partition: DyadicPartition) -> float:
    """||(ρ,u,E)||_{L̃^∞(B^σ)} + ||θ||_{L̃^∞(B^{σ+1})}."""
    sigma = critical_index(series.grid.dim)
    base = BesovParams(sigma)
    return (chemin_lerner_norm(series.rho, base, math.inf, partition)
            + chemin_lerner_norm(series.u, base, math.inf, partition)
            + chemin_lerner_norm(series.E, base, math.inf, partition)
            + chemin_lerner_norm(series.theta, base.shifted(1), math.inf, partition))


def step3_metric(new: StateSeries, old: StateSeries, partition: DyadicPartition) -> float:
    """||(δρ,δu,δE)||_{L̃^∞(B^{σ-1})} + ||δθ||_{L̃^∞(B^σ)}."""
    diff = new.difference(old)
    sigma = critical_index(new.grid.dim)
    weak = BesovParams(sigma - 1)
    return (chemin_lerner_norm(diff.rho, weak, math.inf, partition)
            + chemin_lerner_norm(diff.u, weak, math.inf, partition)
            + chemin_lerner_norm(diff.E, weak, math.inf, partition)
            + chemin_lerner_norm(diff.theta, weak.shifted(1), math.inf, partition))


def check_poisson_constraint(series: StateSeries, params: PhysicalParams) -> np.ndarray:
    """||E - ∇Δ⁻¹(n - n̄)||_{L2} / max(||E||_{L2}, ε) at every snapshot."""
    out = []
    grid = series.grid
    for state in series.states():
        excess = RealField(grid, params.n_bar * np.expm1(state.rho.samples))
        defect = state.E - inverse_laplacian_gradient(excess, warn=False)
        out.append(_l2(defect) / max(_l2(state.E), CONSTRAINT_EPS))
    return np.array(out)


def mass_history(series: StateSeries, params: PhysicalParams) -> np.ndarray:
    """∫ n dx at every snapshot."""
    grid = series.grid
    return np.array([params.n_bar * grid.cell_volume * float(np.sum(np.exp(f.samples)))
                     for f in series.rho.fields])


@dataclass
class IterationTrace:
    iterates: List[StateSeries] = field(repr=False)
    uniform_bound_history: List[float]
    delta_history: List[float]
    constraint_residuals: List[float]
    converged: bool = False
    diverged: bool = False
    message: str = ""
    horizon: float = 0.0
    first_retained_index: int = 1

    @property
    def final(self) -> StateSeries:
        return self.iterates[-1]

    @property
    def iterations(self) -> int:
        return len(self.delta_history)

    def contraction_ratios(self) -> List[float]:
        """δ_{m+1}/δ_m for consecutive entries."""
        d = self.delta_history
        return [d[i + 1] / d[i] if d[i] > 0 else 0.0 for i in range(len(d) - 1)]


def _growing(history: List[float], window: int = GROWTH_WINDOW) -> bool:
    if len(history) <= window:
        return False
    tail = history[-(window + 1):]
    return all(b > a for a, b in zip(tail, tail[1:]))


def run_iteration(data0: EPState, params: PhysicalParams, ts: TimeStepper, max_m: int, tol: float,
                  partition: Optional[DyadicPartition] = None, source: Optional[Source] = None,
                  retain: int = RETAINED_ITERATES, workers: Optional[int] = None,
                  verbose: bool = False) -> IterationTrace:
    """Iterate until the successive difference drops below ``tol``.

    Stops early with ``diverged`` set when the difference grows on
    ``GROWTH_WINDOW`` consecutive iterates or a sub-solve blows up.
    """
    if max_m < 1:
        raise ConfigurationError("max_m must be at least 1")
    if not tol > 0:
        raise ConfigurationError("tolerance must be positive")
    partition = partition or build_partition(data0.grid)
    trace = IterationTrace(iterates=[], uniform_bound_history=[], delta_history=[],
                           constraint_residuals=[], horizon=ts.t_end)
    prev = StateSeries.zeros(data0.grid, ts.snapshot_times())
    for m in range(max_m):
        try:
            nxt = picard_step(prev, data0, m, params, ts, partition, source=source, workers=workers)
        except DivergenceError as exc:
            trace.diverged = True
            trace.message = str(exc)
            break
        bound = step2_metric(nxt, partition)
        delta = step3_metric(nxt, prev, partition)
        residual = float(np.max(check_poisson_constraint(nxt, params)))
        trace.iterates.append(nxt)
        if len(trace.iterates) > retain:
            trace.iterates.pop(0)
            trace.first_retained_index += 1
        trace.uniform_bound_history.append(bound)
        trace.delta_history.append(delta)
        trace.constraint_residuals.append(residual)
        if verbose:
            print(f"   m={m + 1:<3} bound={bound:.4e}  delta={delta:.4e}  constraint={residual:.2e}")
        if delta < tol:
            trace.converged = True
            trace.message = f"converged at m={m + 1}"
            break
        if _growing(trace.delta_history):
            trace.diverged = True
            trace.message = (f"successive differences grew for {GROWTH_WINDOW} iterates at m={m + 1}; "
                             f"retry with T = {ts.t_end / 2:.4g}")
            break
        prev = nxt
    else:
        trace.message = f"no convergence within {max_m} iterates"
    return trace


def run_with_time_halving(data0: EPState, params: PhysicalParams, ts: TimeStepper, max_m: int, tol: float,
                          partition: Optional[DyadicPartition] = None, max_halvings: int = 4,
                          params_for_horizon: Optional[Callable[[float], PhysicalParams]] = None,
                          retain: int = RETAINED_ITERATES, workers: Optional[int] = None,
                          verbose: bool = False) -> Tuple[IterationTrace, TimeStepper, PhysicalParams]:
    """Halve T until the iteration converges or ``max_halvings`` is spent."""
    current_ts, current_params = ts, params
    trace = None
    for attempt in range(max_halvings + 1):
        trace = run_iteration(data0, current_params, current_ts, max_m, tol, partition,
                              retain=retain, workers=workers, verbose=verbose)
        if trace.converged:
            break
        if attempt == max_halvings:
            break
        if verbose:
            print(f"⚠️  T={current_ts.t_end:.4g}: {trace.message}; halving")
        current_ts = current_ts.replace(t_end=current_ts.t_end / 2)
        if params_for_horizon is not None:
            current_params = params_for_horizon(current_ts.t_end)
    return trace, current_ts, current_params


def fixed_point_defect(trace: IterationTrace, data0: EPState, params: PhysicalParams, ts: TimeStepper,
                       partition: DyadicPartition) -> float:
    """Step-3 distance between the last iterate and one more Picard step from it."""
    last = trace.final
    m = trace.first_retained_index + len(trace.iterates) - 1
    again = picard_step(last, data0, m, params, ts, partition)
    return step3_metric(again, last, partition)


# ─── Residuals ───────────────────────────────────────────────────────────

def _l2(f: RealField) -> float:
    return math.sqrt(f.grid.cell_volume * float(np.sum(f.samples ** 2)))


@dataclass
class ResidualReport:
    times: np.ndarray
    transformed: Dict[str, np.ndarray]
    physical: Dict[str, np.ndarray]

    def max_transformed(self) -> float:
        return max(float(np.max(v)) for v in self.transformed.values())

    def max_physical(self) -> float:
        return max(float(np.max(v)) for v in self.physical.values())

    def to_json(self) -> dict:
        return {
            "times": self.times.tolist(),
            "transformed": {k: v.tolist() for k, v in self.transformed.items()},
            "physical": {k: v.tolist() for k, v in self.physical.items()},
            "max_transformed": self.max_transformed(),
            "max_physical": self.max_physical(),
        }


def residual_check(series: StateSeries, params: PhysicalParams, source: Optional[Source] = None) -> ResidualReport:
    """Residuals of the transformed and the physical equations at interior snapshots.

    Time derivatives are central differences of neighbouring snapshots, so the
    residual carries an O(Δt²) floor.
    """
    if len(series) < 3:
        raise QuadratureError("residuals need at least three snapshots")
    times = series.times
    states = series.states()
    names = ("rho", "u", "theta", "E")
    transformed: Dict[str, List[float]] = {name: [] for name in names}
    physical: Dict[str, List[float]] = {name: [] for name in ("mass", "momentum", "energy", "poisson")}
    gm1 = params.gamma - 1
    for i in range(1, len(states) - 1):
        span = times[i + 1] - times[i - 1]
        now = states[i]
        rates = (states[i + 1] - states[i - 1]).map(lambda f: f * (1.0 / span))
        rhs = tendency(now, params)
        extra = source(float(times[i])) if source is not None else None
        for j, name in enumerate(names):
            defect = rates.fields()[j] - rhs.fields()[j]
            if extra is not None:
                defect = defect - extra.fields()[j]
            transformed[name].append(_l2(defect))

        rho, u, theta, E = now.fields()
        grid = now.grid
        n = RealField(grid, params.n_bar * np.exp(rho.samples))
        temp = theta + params.T_L
        dn = RealField(grid, n.samples * rates.rho.samples)
        physical["mass"].append(_l2(dn + divergence(multiply(n, u))))
        momentum = (multiply(n, rates.u) + multiply(n, advect(u, u)) + gradient(multiply(n, temp))
                    - multiply(n, E) + multiply(n, u))
        physical["momentum"].append(_l2(momentum))
        energy = (multiply(n, rates.theta) + multiply(n, dot(u, gradient(temp)))
                  + gm1 * multiply(multiply(n, temp), divergence(u))
                  - gm1 * params.kappa * laplacian(temp)
                  - (gm1 / 2) * multiply(n, dot(u, u))
                  + multiply(n, theta))
        physical["energy"].append(_l2(energy))
        physical["poisson"].append(_l2(divergence(E) - (n - params.n_bar)))
    return ResidualReport(
        times=times[1:-1],
        transformed={k: np.array(v) for k, v in transformed.items()},
        physical={k: np.array(v) for k, v in physical.items()},
    )


def manufactured_source(exact: Callable[[float], EPState], exact_rate: Callable[[float], EPState],
                        params: PhysicalParams) -> Source:
    """Forcing that makes ``exact`` solve the transformed system: ∂_t X - F(X)."""
    def source(t: float) -> EPState:
        state = exact(t)
        rate = exact_rate(t)
        rhs = tendency(state, params)
        return EPState(*(a - b for a, b in zip(rate.fields(), rhs.fields())), time=t)
    return source


# ─── Experiments on the iteration ────────────────────────────────────────

@dataclass
class UniquenessReport:
    perturbation_size: float
    times: np.ndarray
    error_curve: np.ndarray
    sup_error: float

    @property
    def amplification(self) -> float:
        """sup error / perturbation size."""
        return self.sup_error / self.perturbation_size if self.perturbation_size > 0 else 0.0


def perturbation_direction(grid: Grid, partition: DyadicPartition, seed: int = 0) -> Tuple[RealField, RealField]:
    """Random (δρ0, δθ0) with ||δρ0||_{B^σ} + ||δθ0||_{B^{σ+1}} = 1."""
    rng = np.random.default_rng(seed)
    sigma = critical_index(grid.dim)
    d_rho = random_bandlimited_field(grid, rng, slope=-3.0)
    d_theta = random_bandlimited_field(grid, rng, slope=-4.0)
    size = besov_value(d_rho, BesovParams(sigma), partition) + besov_value(d_theta, BesovParams(sigma + 1), partition)
    return d_rho * (1.0 / size), d_theta * (1.0 / size)


def perturbed_data(data0: EPState, direction: Tuple[RealField, RealField], size: float,
                   params: PhysicalParams) -> EPState:
    """Shift ρ0 and θ0 along ``direction`` and recompute E0 from the new density."""
    d_rho, d_theta = direction
    rho = data0.rho + size * d_rho
    excess = RealField(rho.grid, params.n_bar * np.expm1(rho.samples))
    E = inverse_laplacian_gradient(excess, warn=False)
    return EPState(rho, data0.u, data0.theta + size * d_theta, E, data0.time)


def state_distance_curve(a: StateSeries, b: StateSeries, partition: DyadicPartition) -> np.ndarray:
    """||(δρ,δu,δE)(t)||_{B^{σ-1}} + ||δθ(t)||_{B^σ} at a's snapshot times."""
    diff = a.difference(b)
    sigma = critical_index(a.grid.dim)
    weak, strong = BesovParams(sigma - 1), BesovParams(sigma)
    curve = []
    for state in diff.states():
        curve.append(besov_value(state.rho, weak, partition) + besov_value(state.u, weak, partition)
                     + besov_value(state.E, weak, partition) + besov_value(state.theta, strong, partition))
    return np.array(curve)


def uniqueness_experiment(data0: EPState, perturbation_size: float, params: PhysicalParams, ts: TimeStepper,
                          partition: DyadicPartition, max_m: int, tol: float, seed: int = 0,
                          reference: Optional[IterationTrace] = None,
                          workers: Optional[int] = None) -> Tuple[UniquenessReport, IterationTrace]:
    """Run the iteration from data0 and from a perturbed copy; report their distance in time.

    Returns the report and the reference trace so several sizes can share it.
    """
    if perturbation_size < 0:
        raise ConfigurationError("perturbation size must be non-negative")
    if reference is None:
        reference = run_iteration(data0, params, ts, max_m, tol, partition, workers=workers)
    if not reference.converged:
        raise DivergenceError(reference.iterations, suggestion="reference run did not converge; reduce T")
    direction = perturbation_direction(data0.grid, partition, seed)
    other = run_iteration(perturbed_data(data0, direction, perturbation_size, params), params, ts,
                          max_m, tol, partition, workers=workers)
    if not other.converged:
        raise DivergenceError(other.iterations, suggestion="perturbed run did not converge; reduce T")
    curve = state_distance_curve(other.final, reference.final, partition)
    report = UniquenessReport(perturbation_size, other.final.times.copy(), curve, float(np.max(curve)))
    return report, reference


def lipschitz_slope(small: UniquenessReport, large: UniquenessReport) -> float:
    """Ratio of sup errors per unit ratio of perturbation size."""
    if small.sup_error == 0 or small.perturbation_size == 0:
        return math.nan
    return (large.sup_error / small.sup_error) / (large.perturbation_size / small.perturbation_size)


def contraction_ratio(trace: IterationTrace, start: int = 2) -> float:
    """max_{m >= start} δ_{m+1}/δ_m, or nan with too few iterates."""
    ratios = trace.contraction_ratios()[start - 1:]
    return max(ratios) if ratios else math.nan


def kappa_sweep(data0: EPState, params: PhysicalParams, ts: TimeStepper, factors: Sequence[float],
                max_m: int, tol: float, partition: Optional[DyadicPartition] = None,
                workers: Optional[int] = None, verbose: bool = False) -> List[Tuple[float, float, bool]]:
    """(κ̃, contraction ratio, converged) for κ̃ = factor·(1+T)/T."""
    base = (1 + ts.t_end) / ts.t_end
    rows = []
    for factor in factors:
        swept = params.with_kappa_tilde(factor * base)
        trace = run_iteration(data0, swept, ts, max_m, tol, partition, workers=workers)
        rows.append((swept.kappa_tilde, contraction_ratio(trace), trace.converged))
        if verbose:
            print(f"   κ̃={swept.kappa_tilde:.4g}: ratio={rows[-1][1]:.3g} converged={trace.converged}")
    return rows
