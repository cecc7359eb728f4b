"""Run configuration: one JSON file, validated by pydantic, plus the thread override."""
import json
import math
import os
from pathlib import Path
from typing import List, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ep_iteration import PhysicalParams
from errors import ConfigurationError
from initial_data import DataFamily, InitialDataFamily
from linear_solvers import Scheme, TimeStepper
from spectral_core import Grid

load_dotenv()

THREADS_ENV = "EPLAB_THREADS"

Experiment = Literal["simulate", "inequalities", "convergence_study", "kappa_sweep", "uniqueness", "check"]


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(_Spec):
    dim: int = Field(2, ge=1, le=3)
    points_per_axis: int = Field(128, ge=8)
    box_length: float = Field(2 * math.pi, gt=0)

    def build(self) -> Grid:
        return Grid(self.dim, self.points_per_axis, self.box_length)


class PhysicalParamsSpec(_Spec):
    """``kappa`` left unset means κ̃ = kappa_factor·(1+T)/T for the run's horizon T."""
    gamma: float = Field(5.0 / 3.0, gt=1)
    n_bar: float = Field(1.0, gt=0)
    T_L: float = Field(1.0, gt=0)
    kappa: Optional[float] = Field(None, gt=0)
    kappa_factor: float = Field(1.0, gt=0)
    h1_sign: Literal[1, -1] = 1

    def build(self, t_end: float) -> PhysicalParams:
        base = PhysicalParams(gamma=self.gamma, n_bar=self.n_bar, T_L=self.T_L,
                              kappa=self.kappa or 1.0, h1_sign=float(self.h1_sign))
        if self.kappa is None:
            return base.with_kappa_tilde(self.kappa_factor * (1 + t_end) / t_end)
        return base


class StepperSpec(_Spec):
    dt: float = Field(0.005, gt=0)
    t_end: float = Field(0.1, gt=0)
    snapshot_stride: int = Field(1, ge=1)
    cfl_safety: float = Field(0.5, gt=0, le=1)
    scheme: Scheme = Scheme.RK4_EXPLICIT

    def build(self) -> TimeStepper:
        return TimeStepper(self.dt, self.t_end, self.scheme, self.snapshot_stride, self.cfl_safety)


class DataSpec(_Spec):
    family: DataFamily = DataFamily.GAUSSIAN_BUMP
    amplitude: float = Field(0.01, ge=0)
    seed: int = 0

    def build(self) -> InitialDataFamily:
        return InitialDataFamily(self.family, self.amplitude, self.seed)


class IterationSpec(_Spec):
    max_m: int = Field(30, ge=1)
    tol: float = Field(1e-10, gt=0)
    retain: int = Field(12, ge=1)
    max_halvings: int = Field(4, ge=0)


class EnsembleSpec(_Spec):
    size: int = Field(50, ge=1)
    reconstruction_size: int = Field(100, ge=1)
    seed: int = 0
    slopes: List[float] = [-1.0, -2.0, -3.0]
    refine: bool = True


class SweepSpec(_Spec):
    factors: List[float] = [1.0, 4.0, 16.0]

    @field_validator("factors")
    @classmethod
    def positive(cls, v: List[float]) -> List[float]:
        if not v or any(f <= 0 for f in v):
            raise ValueError("sweep factors must be positive")
        return v


class UniquenessSpec(_Spec):
    sizes: List[float] = [1e-3, 1e-4]
    seed: int = 0


class Tolerances(_Spec):
    """Every threshold a report compares against."""
    reconstruction: float = 1e-12
    orthogonality: float = 1e-12
    partition: float = 1e-12
    heat_eigenmode: float = 1e-12
    heat_order_ratio: float = 8.0
    heat_order_slack: float = 0.1
    refinement: float = 0.25
    transport_translation: float = 1e-8
    mass_conservation: float = 1e-10
    contraction_ratio: float = 0.5
    uniform_bound_growth: float = 3.0
    fixed_point_residual: float = 1e-5
    residual_refinement_gain: float = 4.0
    residual_refinement_slack: float = 0.1
    manufactured_residual: float = 1e-8
    constraint_snapshot: float = 1e-6
    constraint_initial: float = 1e-12
    lipschitz_low: float = 7.0
    lipschitz_high: float = 13.0
    mollification_constant: float = 8.0
    kappa_monotone_slack: float = 1e-6
    curl_free: float = 1e-10


class RunConfig(_Spec):
    experiment: Experiment = "simulate"
    grid: GridSpec = GridSpec()
    params: PhysicalParamsSpec = PhysicalParamsSpec()
    stepper: StepperSpec = StepperSpec()
    data: DataSpec = DataSpec()
    iteration: IterationSpec = IterationSpec()
    ensemble: EnsembleSpec = EnsembleSpec()
    sweep: SweepSpec = SweepSpec()
    uniqueness: UniquenessSpec = UniquenessSpec()
    tolerances: Tolerances = Tolerances()
    output_dir: str = "runs/latest"
    ledger: Optional[str] = None
    threads: int = Field(1, ge=1)

    def physical_params(self, t_end: Optional[float] = None) -> PhysicalParams:
        return self.params.build(t_end if t_end is not None else self.stepper.t_end)

    def with_overrides(self, output: Optional[str] = None, seed: Optional[int] = None,
                       threads: Optional[int] = None) -> "RunConfig":
        """CLI flags first, then EPLAB_THREADS for the thread count."""
        update = {}
        if output is not None:
            update["output_dir"] = output
        if seed is not None:
            update["data"] = self.data.model_copy(update={"seed": seed})
            update["ensemble"] = self.ensemble.model_copy(update={"seed": seed})
            update["uniqueness"] = self.uniqueness.model_copy(update={"seed": seed})
        if threads is None and os.getenv(THREADS_ENV):
            try:
                threads = int(os.environ[THREADS_ENV])
            except ValueError as exc:
                raise ConfigurationError(f"{THREADS_ENV} must be an integer") from exc
        if threads is not None:
            if threads < 1:
                raise ConfigurationError("thread count must be at least 1")
            update["threads"] = threads
        return self.model_copy(update=update)


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """Read and validate a JSON config; no path gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config {path}:\n{exc}") from exc
