"""Experiment orchestration and the acceptance suite.

Each experiment takes a validated RunConfig and an output directory, prints
progress, writes its artifacts and returns an ExperimentResult whose
``exit_code`` follows the CLI contract (0 ok, 3 divergence, 4 failed check).
"""
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from besov_norms import BesovParams, besov_norm, critical_index, write_norm_report
from bony_calculus import (
    InequalityReport,
    bony_split,
    commutator_check,
    compose_h1,
    compose_h2,
    composition_check,
    moser_check_classical,
    moser_check_generalized,
    random_bandlimited_field,
    random_ensemble,
    refinement_stability,
)
from ep_iteration import (
    EPState,
    IterationTrace,
    PhysicalParams,
    StateSeries,
    check_poisson_constraint,
    kappa_sweep,
    lipschitz_slope,
    manufactured_source,
    mass_history,
    mollification_tail_constants,
    residual_check,
    run_iteration,
    run_with_time_halving,
    uniqueness_experiment,
)
from errors import BlowUpError, DivergenceError
from initial_data import generate_initial_data
from linear_solvers import (
    Scheme,
    TimeStepper,
    heat_estimate_witness,
    save_series,
    solve_heat,
    solve_transport,
)
from littlewood_paley import (
    DyadicPartition,
    bernstein_check,
    build_partition,
    check_almost_orthogonality,
    check_product_support,
    decompose,
    decomposition_table,
)
from report import build_manifest, iteration_table, manifest_fingerprint, report_summary, write_csv, write_json
from run_config import RunConfig
from shared import db
from shared.parallel import set_default_workers
from spectral_core import (
    Grid,
    RealField,
    dealias,
    laplacian,
    prolong,
    set_fft_workers,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_CHECK_FAILED = 4

MANUFACTURED_AMPLITUDE = 1e-3
MANUFACTURED_DT = 1e-3
MANUFACTURED_T = 0.02


def log(message: str, glyph: str = "") -> None:
    stamp = datetime.now().strftime('%H:%M:%S')
    prefix = f"{glyph} " if glyph else ""
    print(f"[{stamp}] {prefix}{message}", flush=True)


@dataclass
class ExperimentResult:
    experiment: str
    exit_code: int
    verdict: str
    artifacts: List[Path] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RunSetup:
    grid: Grid
    partition: DyadicPartition
    ts: TimeStepper
    params: PhysicalParams
    data0: EPState


def prepare(config: RunConfig) -> RunSetup:
    set_fft_workers(config.threads)
    set_default_workers(config.threads)
    grid = config.grid.build()
    ts = config.stepper.build()
    params = config.physical_params()
    data0 = generate_initial_data(config.data.build(), grid, params)
    return RunSetup(grid, build_partition(grid), ts, params, data0)


def _params_for_horizon(config: RunConfig) -> Optional[Callable[[float], PhysicalParams]]:
    if config.params.kappa is not None:
        return None
    return lambda T: config.physical_params(T)


def _ledger(result: ExperimentResult, config: RunConfig, out: Path, trace: Optional[IterationTrace] = None):
    try:
        run_id = db.log_run(result.experiment, out, result.exit_code, result.verdict,
                            config=config.model_dump(mode="json"), path=config.ledger)
        if trace is not None and trace.iterations:
            db.log_iterations(run_id, report_summary(trace).payload["iterations"], path=config.ledger)
    except Exception as exc:
        log(f"ledger not updated: {exc}", "⚠️")


# ─── simulate ────────────────────────────────────────────────────────────

def simulation_results(trace: IterationTrace, params: PhysicalParams) -> Dict[str, Any]:
    summary = report_summary(trace)
    results: Dict[str, Any] = {"summary": summary.payload}
    if trace.iterations:
        final = trace.final
        results["mass_history"] = mass_history(final, params)
        results["final_constraint_residual"] = check_poisson_constraint(final, params)
    return results


def run_simulate(config: RunConfig, out: Path) -> ExperimentResult:
    setup = prepare(config)
    log(f"simulate: {config.data.family.value} amplitude={config.data.amplitude:g} "
        f"grid={setup.grid.points_per_axis}^{setup.grid.dim} T={setup.ts.t_end:g}", "🔄")
    trace, ts, params = run_with_time_halving(
        setup.data0, setup.params, setup.ts, config.iteration.max_m, config.iteration.tol, setup.partition,
        max_halvings=config.iteration.max_halvings, params_for_horizon=_params_for_horizon(config),
        retain=config.iteration.retain, verbose=True)
    summary = report_summary(trace)
    print(summary.table, flush=True)
    artifacts = [write_csv(out / "per_m.csv", iteration_table(trace))]
    artifacts.append(write_csv(out / "initial_rho_blocks.csv", decomposition_table(setup.data0.rho, setup.partition)))
    sigma = critical_index(setup.grid.dim)
    artifacts.append(write_norm_report(out / "initial_rho_norm.json",
                                       besov_norm(setup.data0.rho, BesovParams(sigma), setup.partition)))
    if trace.iterations:
        for name, series in zip(("rho", "u", "theta", "E"), trace.final.components()):
            artifacts.append(save_series(out / "snapshots", series, name))
    manifest = build_manifest("simulate", setup.grid, params, ts, simulation_results(trace, params),
                              config.model_dump(mode="json"))
    artifacts.append(write_json(out / "manifest.json", manifest))
    code = EXIT_OK if trace.converged else EXIT_DIVERGED
    glyph = "✓" if code == EXIT_OK else "❌"
    log(f"simulate finished: {summary.verdict}", glyph)
    result = ExperimentResult("simulate", code, summary.verdict, artifacts, manifest["results"])
    _ledger(result, config, out, trace)
    return result


# ─── inequalities ────────────────────────────────────────────────────────

def _refined(pairs, fine: Grid):
    return [(prolong(f, fine), prolong(g, fine)) for f, g in pairs]


def _with_refinement(report: InequalityReport, fine_report: Optional[InequalityReport]) -> Dict[str, Any]:
    payload = report.to_json()
    if fine_report is not None:
        payload["refined_sup_ratio"] = fine_report.sup_ratio
        payload["refinement_change"] = refinement_stability(report, fine_report)
    return payload


def inequality_reports(config: RunConfig, grid: Grid) -> Dict[str, Dict[str, Any]]:
    """The five ensemble reports, each with its refinement comparison when enabled."""
    ens = config.ensemble
    dim = grid.dim
    sigma = critical_index(dim)
    partition = build_partition(grid)
    fine = Grid(dim, 2 * grid.points_per_axis, grid.box_length) if ens.refine else None
    fine_partition = build_partition(fine) if fine is not None else None
    # half the dealiasing radius: products are resolved identically on both grids
    band = grid.dealias_radius / 2
    scalar_pairs = random_ensemble(grid, ens.size, ens.seed, (1, 1), ens.slopes, band)
    mixed_pairs = random_ensemble(grid, ens.size, ens.seed + 1, (1, dim), ens.slopes, band)
    fine_scalar = _refined(scalar_pairs, fine) if fine is not None else None
    fine_mixed = _refined(mixed_pairs, fine) if fine is not None else None
    s = sigma - 1

    def both(check: Callable[[Any, DyadicPartition], InequalityReport], coarse_data, fine_data):
        report = check(coarse_data, partition)
        fine_report = check(fine_data, fine_partition) if fine is not None else None
        return _with_refinement(report, fine_report)

    reports: Dict[str, Dict[str, Any]] = {}

    bern = bernstein_check([f for f, _ in scalar_pairs], partition, order=1)
    reports["bernstein"] = {"name": "bernstein", "ensemble_size": len(scalar_pairs), "order": bern.order,
                            "lower": bern.lower, "upper": bern.upper}

    reports["moser_classical"] = both(
        lambda pairs, part: moser_check_classical(pairs, BesovParams(s), part), scalar_pairs, fine_scalar)

    generalized = both(
        lambda pairs, part: moser_check_generalized(pairs, s, 2.0, (math.inf, 2.0, 2.0, math.inf), 1.0, part),
        scalar_pairs, fine_scalar)
    coincide = moser_check_generalized(scalar_pairs, s, 2.0, (math.inf, 2.0, math.inf, 2.0), 1.0, partition)
    generalized["coinciding_exponents_sup_ratio"] = coincide.sup_ratio
    reports["moser_generalized"] = generalized

    cases = []
    for case, shift in (("critical", 0.0), ("g_smoother", -1.0), ("f_smoother", -1.0)):
        params = BesovParams(sigma + shift)
        cases.append(both(lambda pairs, part, c=case, p=params: commutator_check(pairs, p, part, c),
                          mixed_pairs, fine_mixed))
    reports["commutator"] = {"name": "commutator", "cases": cases}

    rho_fields = [0.5 * f for f, _ in scalar_pairs]
    params = config.physical_params()
    h1_of = lambda r: compose_h1(r, params.gamma, params.kappa, params.n_bar)  # noqa: E731
    h1 = both(lambda fields, part: composition_check(fields, h1_of, BesovParams(sigma), part, "composition_h1"),
              rho_fields, [prolong(f, fine) for f in rho_fields] if fine is not None else None)
    h2 = both(lambda fields, part: composition_check(fields, lambda r: compose_h2(r, params.n_bar),
                                                     BesovParams(sigma), part, "composition_h2"),
              rho_fields, [prolong(f, fine) for f in rho_fields] if fine is not None else None)
    reports["composition"] = {"name": "composition", "cases": [h1, h2]}
    return reports


def temperature_product_case(size: int, seed: int, points: int = 32) -> InequalityReport:
    """Generalized product estimate for f = h₁(ρ), g = Δθ at s = σ - 2, exponents (∞, 2, 2, ∞), in 3-D."""
    grid = Grid(3, points)
    partition = build_partition(grid)
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(size):
        rho = 0.5 * random_bandlimited_field(grid, rng, float(rng.choice([-1.0, -2.0, -3.0])))
        theta = random_bandlimited_field(grid, rng, float(rng.choice([-2.0, -3.0])))
        pairs.append((compose_h1(rho, gamma=2.0, kappa=1.0, n_bar=1.0), laplacian(theta)))
    s = critical_index(3) - 2
    return moser_check_generalized(pairs, s, 2.0, (math.inf, 2.0, 2.0, math.inf), 1.0, partition)


def run_inequalities(config: RunConfig, out: Path) -> ExperimentResult:
    prepare(config)
    grid = config.grid.build()
    log(f"inequalities: ensemble of {config.ensemble.size} on {grid.points_per_axis}^{grid.dim}", "🔄")
    reports = inequality_reports(config, grid)
    artifacts = [write_json(out / f"{name}.json", payload) for name, payload in reports.items()]
    for name, payload in reports.items():
        sup = payload.get("sup_ratio", payload.get("upper"))
        if sup is not None:
            log(f"{name}: sup ratio {sup:.4g}", "✓")
    result = ExperimentResult("inequalities", EXIT_OK, "reported", artifacts, reports)
    _ledger(result, config, out)
    return result


# ─── convergence study ───────────────────────────────────────────────────

def manufactured_solution(grid: Grid, amplitude: float):
    """Smooth exact state and its time derivative; E stays a gradient."""
    k = grid.wavenumber_scale
    x = grid.coordinates[0]
    dim = grid.dim

    def exact(t: float) -> EPState:
        rho = amplitude * math.cos(t) * np.sin(k * x)
        u = np.stack([amplitude * math.sin(t + j) * np.cos(k * x) for j in range(dim)])
        theta = amplitude * math.cos(2 * t) * np.cos(k * x)
        E = np.zeros((dim,) + grid.shape)
        E[0] = amplitude * math.exp(-t) * k * np.cos(k * x)
        return EPState(RealField(grid, rho), RealField(grid, u), RealField(grid, theta), RealField(grid, E), t)

    def rate(t: float) -> EPState:
        rho = -amplitude * math.sin(t) * np.sin(k * x)
        u = np.stack([amplitude * math.cos(t + j) * np.cos(k * x) for j in range(dim)])
        theta = -2 * amplitude * math.sin(2 * t) * np.cos(k * x)
        E = np.zeros((dim,) + grid.shape)
        E[0] = -amplitude * math.exp(-t) * k * np.cos(k * x)
        return EPState(RealField(grid, rho), RealField(grid, u), RealField(grid, theta), RealField(grid, E), t)

    return exact, rate


def manufactured_residual(params: PhysicalParams, max_m: int, tol: float, dim: int = 2,
                          points: int = 32) -> Tuple[float, IterationTrace]:
    """Largest transformed-equation residual of the forced iteration's fixed point."""
    grid = Grid(dim, points)
    exact, rate = manufactured_solution(grid, MANUFACTURED_AMPLITUDE)
    source = manufactured_source(exact, rate, params)
    ts = TimeStepper(MANUFACTURED_DT, MANUFACTURED_T)
    trace = run_iteration(exact(0.0), params, ts, max_m, tol, build_partition(grid), source=source)
    if not trace.converged:
        raise DivergenceError(trace.iterations, suggestion="manufactured run did not converge")
    return residual_check(trace.final, params, source).max_transformed(), trace


def residual_refinement(setup: RunSetup, config: RunConfig) -> List[Dict[str, Any]]:
    """Fixed-point residuals at dt and dt/2 (snapshots at every step)."""
    rows = []
    for factor in (1, 2):
        ts = setup.ts.replace(dt=setup.ts.dt / factor, snapshot_stride=1)
        trace = run_iteration(setup.data0, setup.params, ts, config.iteration.max_m, config.iteration.tol,
                              setup.partition)
        if not trace.converged:
            raise DivergenceError(trace.iterations, suggestion=f"no convergence at dt={ts.step:.3g}")
        report = residual_check(trace.final, setup.params)
        rows.append({"dt": ts.step, "max_transformed": report.max_transformed(),
                     "max_physical": report.max_physical(),
                     **{f"residual_{k}": float(np.max(v)) for k, v in report.transformed.items()}})
    finer = rows[1]["max_transformed"]
    rows[1]["gain"] = rows[0]["max_transformed"] / finer if finer > 0 else math.inf
    return rows


def run_convergence_study(config: RunConfig, out: Path) -> ExperimentResult:
    setup = prepare(config)
    log("convergence study: fixed-point residual under dt refinement", "🔄")
    try:
        rows = residual_refinement(setup, config)
        mms, _ = manufactured_residual(setup.params, config.iteration.max_m, config.iteration.tol)
    except DivergenceError as exc:
        log(str(exc), "❌")
        result = ExperimentResult("convergence_study", EXIT_DIVERGED, "nonconvergent", [], {"error": str(exc)})
        _ledger(result, config, out)
        return result
    artifacts = [write_csv(out / "residuals.csv", pd.DataFrame(rows))]
    results = {"refinement": rows, "manufactured_residual": mms}
    manifest = build_manifest("convergence_study", setup.grid, setup.params, setup.ts, results,
                              config.model_dump(mode="json"))
    artifacts.append(write_json(out / "manifest.json", manifest))
    log(f"residual gain {rows[1]['gain']:.2f}, manufactured residual {mms:.2e}", "✓")
    result = ExperimentResult("convergence_study", EXIT_OK, "reported", artifacts, results)
    _ledger(result, config, out)
    return result


# ─── κ̃ sweep ─────────────────────────────────────────────────────────────

def run_kappa_sweep(config: RunConfig, out: Path) -> ExperimentResult:
    setup = prepare(config)
    log(f"κ̃ sweep over factors {config.sweep.factors}", "🔄")
    rows = kappa_sweep(setup.data0, setup.params, setup.ts, config.sweep.factors, config.iteration.max_m,
                       config.iteration.tol, setup.partition, verbose=True)
    table = pd.DataFrame(rows, columns=["kappa_tilde", "contraction_ratio", "converged"])
    artifacts = [write_csv(out / "kappa_sweep.csv", table)]
    results = {"sweep": table.to_dict("records")}
    manifest = build_manifest("kappa_sweep", setup.grid, setup.params, setup.ts, results,
                              config.model_dump(mode="json"))
    artifacts.append(write_json(out / "manifest.json", manifest))
    code = EXIT_OK if all(r[2] for r in rows) else EXIT_DIVERGED
    result = ExperimentResult("kappa_sweep", code, "reported" if code == EXIT_OK else "nonconvergent",
                              artifacts, results)
    _ledger(result, config, out)
    return result


# ─── uniqueness ──────────────────────────────────────────────────────────

def uniqueness_study(setup: RunSetup, config: RunConfig) -> Dict[str, Any]:
    reference = None
    reports = []
    for size in config.uniqueness.sizes:
        report, reference = uniqueness_experiment(setup.data0, size, setup.params, setup.ts, setup.partition,
                                                  config.iteration.max_m, config.iteration.tol,
                                                  seed=config.uniqueness.seed, reference=reference)
        log(f"perturbation {size:g}: sup error {report.sup_error:.3e}", "✓")
        reports.append(report)
    ordered = sorted(reports, key=lambda r: r.perturbation_size)
    slopes = [lipschitz_slope(a, b) for a, b in zip(ordered, ordered[1:])]
    return {
        "sizes": [r.perturbation_size for r in reports],
        "sup_errors": [r.sup_error for r in reports],
        "amplification": [r.amplification for r in reports],
        "error_curves": {f"{r.perturbation_size:g}": r.error_curve for r in reports},
        "times": reports[0].times if reports else [],
        "slopes": slopes,
    }


def run_uniqueness(config: RunConfig, out: Path) -> ExperimentResult:
    setup = prepare(config)
    log(f"uniqueness: perturbation sizes {config.uniqueness.sizes}", "🔄")
    try:
        results = uniqueness_study(setup, config)
    except DivergenceError as exc:
        log(f"experiment aborted: {exc}", "❌")
        result = ExperimentResult("uniqueness", EXIT_DIVERGED, "nonconvergent", [], {"error": str(exc)})
        _ledger(result, config, out)
        return result
    manifest = build_manifest("uniqueness", setup.grid, setup.params, setup.ts, results,
                              config.model_dump(mode="json"))
    artifacts = [write_json(out / "manifest.json", manifest)]
    result = ExperimentResult("uniqueness", EXIT_OK, "reported", artifacts, results)
    _ledger(result, config, out)
    return result


# ─── acceptance suite ────────────────────────────────────────────────────

@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)


def _below(name: str, value: float, tolerance: float, **detail) -> CheckResult:
    return CheckResult(name, value, tolerance, bool(value < tolerance), detail)


def check_bony_reconstruction(config: RunConfig, grid: Grid) -> CheckResult:
    partition = build_partition(grid)
    pairs = random_ensemble(grid, config.ensemble.reconstruction_size, config.ensemble.seed)
    worst = max(bony_split(f, g, partition).reconstruction_error() for f, g in pairs)
    return _below("bony_reconstruction", worst, config.tolerances.reconstruction, pairs=len(pairs))


def check_orthogonality(config: RunConfig, grid: Grid) -> CheckResult:
    partition = build_partition(grid)
    pairs = random_ensemble(grid, min(config.ensemble.size, 10), config.ensemble.seed)
    far = max(check_almost_orthogonality(f, partition).max_far_ratio for f, _ in pairs)
    support = max(check_product_support(f, g, partition) for f, g in pairs)
    return _below("almost_orthogonality", max(far, support), config.tolerances.orthogonality,
                  far_pairs=far, product_support=support)


def check_partition(config: RunConfig, grid: Grid) -> CheckResult:
    partition = build_partition(grid)
    f = random_bandlimited_field(grid, np.random.default_rng(config.ensemble.seed), -1.0)
    rebuilt = decompose(f, partition).reconstruct()
    residual = float(np.max(np.abs(rebuilt.samples - dealias(f).samples))) / max(f.max_abs(), 1e-300)
    value = max(partition.partition_residual(), residual)
    return _below("partition_of_unity", value, config.tolerances.partition,
                  partition_sum=partition.partition_residual(), reconstruction=residual)


def _heat_order_error(dt: float) -> float:
    grid = Grid(1, 32)
    x = grid.coordinates[0]

    def forcing(t):
        return RealField(grid, (math.cos(t) + math.sin(t)) * np.cos(x))

    theta = solve_heat(RealField.zeros(grid), 1.0, forcing, TimeStepper(dt, 1.0, Scheme.EXPONENTIAL_RK4))
    return float(np.max(np.abs(theta.fields[-1].samples[0] - math.sin(1.0) * np.cos(x))))


def check_heat(config: RunConfig, grid: Grid) -> CheckResult:
    tol = config.tolerances
    line = Grid(1, 64)
    x = line.coordinates[0]
    tone = RealField(line, np.cos(3 * x))
    decayed = solve_heat(tone, 1.0, None, TimeStepper(0.05, 0.5, Scheme.EXPONENTIAL_RK4))
    eigen_error = float(np.max(np.abs(decayed.fields[-1].samples[0] - math.exp(-9 * 0.5) * np.cos(3 * x))))
    ratio = _heat_order_error(0.1) / _heat_order_error(0.05)
    partition = build_partition(grid)
    fine = Grid(grid.dim, 2 * grid.points_per_axis, grid.box_length)
    fine_partition = build_partition(fine)
    rng = np.random.default_rng(config.ensemble.seed)
    ts = TimeStepper(0.01, 0.1, Scheme.EXPONENTIAL_RK4)
    kappa_tilde = config.physical_params().kappa_tilde
    cases = []
    for _ in range(5):
        theta0 = random_bandlimited_field(grid, rng, -3.0)
        shape = random_bandlimited_field(grid, rng, -3.0)
        cases.append((theta0, shape))

    def witness(part, lift):
        pairs = [(lift(t0), (lambda t, g=lift(sh): g * math.cos(t))) for t0, sh in cases]
        return heat_estimate_witness(pairs, kappa_tilde, ts, part, critical_index(grid.dim), 1.0)

    coarse = witness(partition, lambda f: f)
    refined = witness(fine_partition, lambda f: prolong(f, fine))
    change = refinement_stability(coarse, refined)
    order_floor = tol.heat_order_ratio * (1 - tol.heat_order_slack)
    passed = eigen_error < tol.heat_eigenmode and ratio >= order_floor and change < tol.refinement
    return CheckResult("heat_solver", ratio, order_floor, passed,
                       {"eigenmode_error": eigen_error, "order_ratio": ratio,
                        "witness_sup": coarse.sup_ratio, "witness_refinement_change": change})


def check_transport(config: RunConfig, grid: Grid) -> CheckResult:
    tol = config.tolerances
    line = Grid(1, 256)
    x = line.coordinates[0]
    a0 = RealField(line, np.cos(x))
    dt = 0.5 * line.spacing
    period = line.box_length
    moved = solve_transport(a0, RealField(line, np.ones((1,) + line.shape)), None,
                            TimeStepper(dt, period, snapshot_stride=10 ** 6))
    translation = float(np.max(np.abs(moved.fields[-1].samples - a0.samples)))

    plane = Grid(2, 64)
    X, Y = plane.coordinates
    v = RealField(plane, np.stack([np.sin(Y), np.sin(X)]))
    a = RealField(plane, 1.0 + random_bandlimited_field(plane, np.random.default_rng(0), -2.0).samples)
    a = dealias(a)
    out = solve_transport(a, v, None, TimeStepper(0.5 * plane.spacing / math.sqrt(2), 0.5, snapshot_stride=10 ** 6))
    mean0 = float(np.mean(a.samples))
    drift = abs(float(np.mean(out.fields[-1].samples)) - mean0) / abs(mean0)
    passed = translation < tol.transport_translation and drift < tol.mass_conservation
    return CheckResult("transport_solver", translation, tol.transport_translation, passed,
                       {"translation_error": translation, "mean_drift": drift})


def check_moser(config: RunConfig, grid: Grid, reports: Dict[str, Dict[str, Any]]) -> CheckResult:
    tol = config.tolerances
    changes = [reports["moser_classical"].get("refinement_change", 0.0),
               reports["moser_generalized"].get("refinement_change", 0.0)]
    sups = [reports["moser_classical"]["sup_ratio"], reports["moser_generalized"]["sup_ratio"]]
    temperature_case = temperature_product_case(config.ensemble.size, config.ensemble.seed)
    finite = all(math.isfinite(v) for v in sups + [temperature_case.sup_ratio])
    worst = max(changes)
    return CheckResult("moser_suites", worst, tol.refinement, bool(finite and worst < tol.refinement),
                       {"sup_ratios": sups, "temperature_product_sup": temperature_case.sup_ratio,
                        "refinement_changes": changes})


def check_commutator(config: RunConfig, reports: Dict[str, Dict[str, Any]]) -> CheckResult:
    cases = reports["commutator"]["cases"]
    changes = [c.get("refinement_change", 0.0) for c in cases]
    sums = [c["sup_ratio"] for c in cases]
    worst = max(changes)
    passed = all(math.isfinite(s) for s in sums) and worst < config.tolerances.refinement
    return CheckResult("commutator_suite", worst, config.tolerances.refinement, bool(passed),
                       {"l1_sums": sums, "refinement_changes": changes})


def _meaningful_ratios(trace: IterationTrace, tol: float, first: int = 2, last: int = 8) -> List[float]:
    d = trace.delta_history
    out = []
    for i in range(first, min(last, len(d) - 2) + 1):
        if d[i] > 100 * tol:
            out.append(d[i + 1] / d[i])
    return out


def check_picard(config: RunConfig, trace: IterationTrace) -> CheckResult:
    tol = config.tolerances
    ratios = _meaningful_ratios(trace, config.iteration.tol)
    worst = max(ratios) if ratios else 0.0
    bounds = trace.uniform_bound_history
    growth = max(bounds) / bounds[0] if bounds and bounds[0] > 0 else 0.0
    passed = trace.converged and worst <= tol.contraction_ratio and growth <= tol.uniform_bound_growth
    return CheckResult("picard_convergence", worst, tol.contraction_ratio, bool(passed),
                       {"ratios": ratios, "bound_growth": growth, "iterations": trace.iterations})


def check_residuals(config: RunConfig, setup: RunSetup) -> CheckResult:
    tol = config.tolerances
    rows = residual_refinement(setup, config)
    mms, _ = manufactured_residual(setup.params, config.iteration.max_m, config.iteration.tol)
    gain = rows[1]["gain"]
    gain_floor = tol.residual_refinement_gain * (1 - tol.residual_refinement_slack)
    passed = (rows[0]["max_transformed"] < tol.fixed_point_residual and gain >= gain_floor
              and mms < tol.manufactured_residual)
    return CheckResult("fixed_point_residual", rows[0]["max_transformed"], tol.fixed_point_residual, bool(passed),
                       {"refinement": rows, "gain": gain, "manufactured_residual": mms})


def check_constraint(config: RunConfig, setup: RunSetup, trace: IterationTrace) -> CheckResult:
    tol = config.tolerances
    initial = float(check_poisson_constraint(StateSeries.from_states([setup.data0]), setup.params)[0])
    along = float(np.max(check_poisson_constraint(trace.final, setup.params)))
    curl = max(s.curl_residual() for s in trace.final.states())
    passed = initial < tol.constraint_initial and along < tol.constraint_snapshot and curl < tol.curl_free
    return CheckResult("poisson_constraint", along, tol.constraint_snapshot, bool(passed),
                       {"initial": initial, "max_along_run": along, "max_curl": curl})


def check_uniqueness(config: RunConfig, setup: RunSetup, reference: IterationTrace) -> CheckResult:
    tol = config.tolerances
    sizes = sorted(config.uniqueness.sizes, reverse=True)[:2]
    reports = []
    for size in sizes:
        report, _ = uniqueness_experiment(setup.data0, size, setup.params, setup.ts, setup.partition,
                                          config.iteration.max_m, config.iteration.tol,
                                          seed=config.uniqueness.seed, reference=reference)
        reports.append(report)
    ratio = reports[0].sup_error / reports[1].sup_error if reports[1].sup_error > 0 else math.inf
    passed = tol.lipschitz_low <= ratio <= tol.lipschitz_high
    return CheckResult("uniqueness_scaling", ratio, tol.lipschitz_high, bool(passed),
                       {"sizes": sizes, "sup_errors": [r.sup_error for r in reports],
                        "window": [tol.lipschitz_low, tol.lipschitz_high]})


def check_mollification(config: RunConfig, setup: RunSetup) -> CheckResult:
    constants = []
    for f in (setup.data0.rho, setup.data0.u, setup.data0.theta):
        constants.extend(mollification_tail_constants(f, setup.partition))
    worst = max(constants) if constants else 0.0
    return CheckResult("mollification_tail", worst, config.tolerances.mollification_constant,
                       bool(worst <= config.tolerances.mollification_constant), {"constants": constants})


def check_kappa_monotone(config: RunConfig, setup: RunSetup) -> CheckResult:
    rows = kappa_sweep(setup.data0, setup.params, setup.ts, config.sweep.factors, config.iteration.max_m,
                       config.iteration.tol, setup.partition)
    ratios = [0.0 if math.isnan(r) else r for _, r, _ in rows]
    slack = config.tolerances.kappa_monotone_slack
    worst = max((b - a for a, b in zip(ratios, ratios[1:])), default=0.0)
    return CheckResult("kappa_monotonicity", worst, slack, bool(worst <= slack),
                       {"kappa_tilde": [r[0] for r in rows], "ratios": ratios})


def check_determinism(config: RunConfig, setup: RunSetup, trace: IterationTrace) -> CheckResult:
    again = run_iteration(setup.data0, setup.params, setup.ts, config.iteration.max_m, config.iteration.tol,
                          setup.partition, retain=config.iteration.retain)
    first = build_manifest("simulate", setup.grid, setup.params, setup.ts,
                           simulation_results(trace, setup.params))
    second = build_manifest("simulate", setup.grid, setup.params, setup.ts,
                            simulation_results(again, setup.params))
    same = manifest_fingerprint(first) == manifest_fingerprint(second)
    return CheckResult("determinism", 0.0 if same else 1.0, 0.5, same, {})


def run_acceptance(config: RunConfig, out: Path) -> ExperimentResult:
    setup = prepare(config)
    grid = setup.grid
    checks: List[CheckResult] = []

    def record(check: CheckResult):
        checks.append(check)
        glyph = "✓" if check.passed else "❌"
        log(f"{check.name}: {check.value:.3e} (tolerance {check.tolerance:.3e})", glyph)

    log(f"acceptance suite on {grid.points_per_axis}^{grid.dim}", "🔄")
    record(check_bony_reconstruction(config, grid))
    record(check_orthogonality(config, grid))
    record(check_partition(config, grid))
    record(check_heat(config, grid))
    record(check_transport(config, grid))
    reports = inequality_reports(config, grid)
    record(check_moser(config, grid, reports))
    record(check_commutator(config, reports))
    try:
        trace = run_iteration(setup.data0, setup.params, setup.ts, config.iteration.max_m, config.iteration.tol,
                              setup.partition, retain=config.iteration.retain, verbose=True)
        record(check_picard(config, trace))
        if not trace.converged:
            raise DivergenceError(trace.iterations, suggestion=trace.message)
        record(check_residuals(config, setup))
        record(check_constraint(config, setup, trace))
        record(check_uniqueness(config, setup, trace))
        record(check_mollification(config, setup))
        record(check_kappa_monotone(config, setup))
        record(check_determinism(config, setup, trace))
        code = EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK_FAILED
        verdict = "pass" if code == EXIT_OK else "fail"
    except (DivergenceError, BlowUpError) as exc:
        log(f"acceptance aborted: {exc}", "❌")
        code, verdict = EXIT_DIVERGED, "nonconvergent"
    payload = {"verdict": verdict, "checks": [c.__dict__ for c in checks]}
    artifacts = [write_json(out / "check_report.json", payload)]
    log(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed", "✓" if code == EXIT_OK else "❌")
    result = ExperimentResult("check", code, verdict, artifacts, payload)
    _ledger(result, config, out)
    return result


EXPERIMENTS: Dict[str, Callable[[RunConfig, Path], ExperimentResult]] = {
    "simulate": run_simulate,
    "inequalities": run_inequalities,
    "convergence_study": run_convergence_study,
    "kappa_sweep": run_kappa_sweep,
    "uniqueness": run_uniqueness,
    "check": run_acceptance,
}
