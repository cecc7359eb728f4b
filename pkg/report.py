"""Human-readable summaries and machine-readable run artifacts."""
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from ep_iteration import IterationTrace, PhysicalParams
from linear_solvers import TimeStepper
from spectral_core import Grid


@dataclass
class Summary:
    verdict: str
    table: str
    payload: Dict[str, Any]


def iteration_table(trace: IterationTrace) -> pd.DataFrame:
    """One row per iterate: uniform bound, successive difference, its ratio, constraint residual."""
    rows = []
    for i, (bound, delta, residual) in enumerate(zip(trace.uniform_bound_history, trace.delta_history,
                                                     trace.constraint_residuals)):
        prev = trace.delta_history[i - 1] if i > 0 else None
        ratio = delta / prev if prev else None
        rows.append({"m": i + 1, "uniform_bound": bound, "delta": delta, "ratio": ratio,
                     "constraint_residual": residual})
    return pd.DataFrame(rows, columns=["m", "uniform_bound", "delta", "ratio", "constraint_residual"])


def report_summary(trace: Optional[IterationTrace]) -> Summary:
    if trace is None or trace.iterations == 0:
        message = trace.message if trace is not None else ""
        return Summary("no iterations", "(no iterations)", {"verdict": "no iterations", "message": message,
                                                            "iterations": []})
    table = iteration_table(trace)
    if trace.converged:
        verdict = "contraction"
    elif trace.diverged:
        verdict = "nonconvergent"
    else:
        verdict = "unconverged"
    payload = {
        "verdict": verdict,
        "message": trace.message,
        "horizon": trace.horizon,
        "iterations": _records(table),
        "final_ratio": _clean(table["ratio"].iloc[-1]),
        "constraint_residual_curve": [float(v) for v in trace.constraint_residuals],
    }
    if verdict == "nonconvergent":
        payload["suggested_horizon"] = trace.horizon / 2
    text = table.to_string(index=False, float_format=lambda v: f"{v:.4e}")
    footer = f"verdict: {verdict}"
    if verdict == "contraction" and payload["final_ratio"] is not None:
        footer += f" (final ratio {payload['final_ratio']:.3f})"
    elif verdict == "nonconvergent":
        footer += f"; try T = {trace.horizon / 2:.4g}"
    return Summary(verdict, f"{text}\n{footer}", payload)


def _clean(value):
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


def _records(table: pd.DataFrame) -> List[Dict[str, Any]]:
    return [{k: _clean(v) if k != "m" else int(v) for k, v in row.items()} for row in table.to_dict("records")]


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return None if math.isnan(value) else value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True))
    return path


def write_csv(path: Union[str, Path], table: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    return path


def build_manifest(experiment: str, grid: Grid, params: PhysicalParams, ts: TimeStepper,
                   results: Dict[str, Any], config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Run manifest; ``created`` is the only field that differs between identical runs."""
    return {
        "experiment": experiment,
        "created": datetime.now(timezone.utc).isoformat(),
        "grid": {"dim": grid.dim, "points_per_axis": grid.points_per_axis, "box_length": grid.box_length},
        "params": {"gamma": params.gamma, "kappa": params.kappa, "kappa_tilde": params.kappa_tilde,
                   "n_bar": params.n_bar, "T_L": params.T_L, "h1_sign": params.h1_sign},
        "stepper": {"dt": ts.dt, "effective_dt": ts.step, "t_end": ts.t_end, "scheme": ts.scheme.value,
                    "snapshot_stride": ts.snapshot_stride, "cfl_safety": ts.cfl_safety},
        "config": config or {},
        "results": results,
    }


def manifest_fingerprint(manifest: Dict[str, Any]) -> str:
    """Canonical JSON of a manifest without its timestamp."""
    stripped = {k: v for k, v in manifest.items() if k != "created"}
    return json.dumps(to_jsonable(stripped), sort_keys=True)
