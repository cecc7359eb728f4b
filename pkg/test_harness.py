"""
Tests for configuration, initial data, reports, the run ledger and the command line.
"""
import json
import math

import numpy as np
import pytest

import main
from ep_iteration import IterationTrace, PhysicalParams
from errors import AmplitudeClampWarning, ConfigurationError
from experiments import EXIT_CONFIG, EXIT_OK
from initial_data import InitialDataFamily, generate_initial_data
from linear_solvers import TimeStepper
from report import build_manifest, iteration_table, manifest_fingerprint, report_summary, to_jsonable
from run_config import load_config
from shared import db
from spectral_core import Grid

TINY_RUN = {
    "experiment": "simulate",
    "grid": {"dim": 1, "points_per_axis": 32},
    "stepper": {"dt": 0.01, "t_end": 0.05},
    "data": {"family": "gaussian_bump", "amplitude": 0.01},
    "iteration": {"max_m": 30, "tol": 1e-10, "max_halvings": 1},
}


def _write(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def _trace(deltas, converged=False, diverged=False, horizon=0.1):
    return IterationTrace(iterates=[], uniform_bound_history=[1.0] * len(deltas), delta_history=list(deltas),
                          constraint_residuals=[1e-13] * len(deltas), converged=converged, diverged=diverged,
                          horizon=horizon)


class TestConfig:
    def test_defaults(self):
        config = load_config(None)
        assert config.experiment == "simulate"
        assert config.iteration.max_m == 30
        assert config.grid.build() == Grid(2, 128)

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(_write(tmp_path, {"grid": {"dim": 2, "resolution": 64}}))

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_out_of_range_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(_write(tmp_path, {"grid": {"dim": 4}}))

    def test_kappa_follows_horizon(self, tmp_path):
        config = load_config(_write(tmp_path, {"stepper": {"t_end": 0.25}, "params": {"kappa_factor": 2.0}}))
        assert math.isclose(config.physical_params().kappa_tilde, 2.0 * 1.25 / 0.25)
        assert math.isclose(config.physical_params(0.5).kappa_tilde, 2.0 * 1.5 / 0.5)

    def test_explicit_kappa(self, tmp_path):
        config = load_config(_write(tmp_path, {"params": {"kappa": 3.0, "gamma": 2.0}}))
        assert math.isclose(config.physical_params().kappa_tilde, 3.0)

    def test_overrides(self):
        config = load_config(None).with_overrides(output="elsewhere", seed=7, threads=4)
        assert config.output_dir == "elsewhere"
        assert config.data.seed == config.ensemble.seed == config.uniqueness.seed == 7
        assert config.threads == 4

    def test_thread_environment(self, monkeypatch):
        monkeypatch.setenv("EPLAB_THREADS", "3")
        assert load_config(None).with_overrides().threads == 3
        assert load_config(None).with_overrides(threads=2).threads == 2
        monkeypatch.setenv("EPLAB_THREADS", "many")
        with pytest.raises(ConfigurationError):
            load_config(None).with_overrides()


class TestInitialData:
    @pytest.mark.parametrize("family", ["gaussian_bump", "acoustic_tone", "random_bandlimited"])
    def test_neutral_and_constrained(self, plane, family):
        params = PhysicalParams()
        data0 = generate_initial_data(InitialDataFamily(family, 0.05, seed=2), plane, params)
        assert math.isclose(float(np.mean(np.exp(data0.rho.samples))), 1.0, rel_tol=1e-12)
        assert data0.curl_residual() < 1e-10

    def test_zero_amplitude_is_equilibrium(self, plane):
        data0 = generate_initial_data(InitialDataFamily("gaussian_bump", 0.0), plane, PhysicalParams())
        assert all(np.max(np.abs(f.samples)) == 0.0 for f in data0.fields())

    def test_large_amplitude_is_clamped(self, plane):
        with pytest.warns(AmplitudeClampWarning):
            data0 = generate_initial_data(InitialDataFamily("gaussian_bump", 5.0), plane, PhysicalParams())
        assert float(np.min(data0.rho.samples)) >= math.log(0.5)

    def test_family_validation(self):
        with pytest.raises(ConfigurationError):
            InitialDataFamily("gaussian_bump", -1.0)
        with pytest.raises(ValueError):
            InitialDataFamily("square_wave", 0.1)


class TestReport:
    def test_verdicts(self):
        assert report_summary(None).verdict == "no iterations"
        assert report_summary(_trace([1.0, 0.1, 1e-11], converged=True)).verdict == "contraction"
        diverged = report_summary(_trace([1.0, 2.0, 3.0, 4.0], diverged=True, horizon=0.2))
        assert diverged.verdict == "nonconvergent"
        assert diverged.payload["suggested_horizon"] == pytest.approx(0.1)
        assert "try T = 0.1" in diverged.table
        assert report_summary(_trace([1.0, 0.5])).verdict == "unconverged"

    def test_iteration_table(self):
        table = iteration_table(_trace([1.0, 0.25]))
        assert list(table["m"]) == [1, 2]
        assert math.isnan(table["ratio"].iloc[0])
        assert table["ratio"].iloc[1] == pytest.approx(0.25)

    def test_jsonable(self):
        out = to_jsonable({"a": np.array([1.0, np.nan]), "b": math.inf, 3: np.int64(2), "c": np.bool_(True)})
        assert out == {"a": [1.0, None], "b": "inf", "3": 2, "c": True}

    def test_fingerprint_ignores_timestamp(self, plane):
        first = build_manifest("simulate", plane, PhysicalParams(), TimeStepper(0.01, 0.1), {"x": 1.0})
        second = dict(first, created="another time")
        assert manifest_fingerprint(first) == manifest_fingerprint(second)
        assert manifest_fingerprint(first) != manifest_fingerprint(dict(first, results={"x": 2.0}))


class TestLedger:
    def test_runs_and_iterations(self):
        run_id = db.log_run("simulate", "runs/a", 0, "contraction", config={"seed": 1})
        db.log_run("kappa_sweep", "runs/b", 3, "nonconvergent")
        db.log_iterations(run_id, [{"m": 1, "uniform_bound": 2.0, "delta": 0.5, "ratio": None,
                                    "constraint_residual": 1e-13}])
        recent = db.get_recent_runs()
        assert sorted(r["experiment"] for r in recent) == ["kappa_sweep", "simulate"]
        assert db.get_recent_runs(experiment="simulate")[0]["id"] == run_id
        rows = db.get_iterations(run_id)
        assert rows[0]["delta"] == 0.5
        assert rows[0]["ratio"] is None


class TestCommandLine:
    def test_bad_config_exit_code(self, tmp_path):
        path = _write(tmp_path, {"grid": {"dim": 9}})
        assert main.main(["simulate", "--config", str(path)]) == EXIT_CONFIG

    def test_rejected_input_exit_code(self, tmp_path):
        # a step far beyond the CFL limit
        payload = dict(TINY_RUN, stepper={"dt": 1.0, "t_end": 2.0})
        code = main.main(["simulate", "--config", str(_write(tmp_path, payload)),
                          "--output", str(tmp_path / "out")])
        assert code == EXIT_CONFIG

    def test_simulate_smoke_run(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main.main(["run", "--config", str(_write(tmp_path, TINY_RUN)), "--output", str(out),
                          "--threads", "1"])
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["experiment"] == "simulate"
        assert manifest["results"]["summary"]["verdict"] == "contraction"
        assert (out / "per_m.csv").exists()
        assert (out / "snapshots" / "rho_index.json").exists()

        assert main.main(["runs"]) == 0
        listing = capsys.readouterr().out
        assert "simulate" in listing
        assert str(out) in listing

    def test_ledger_path_from_config(self, tmp_path, capsys):
        ledger = tmp_path / "elsewhere.db"
        path = _write(tmp_path, dict(TINY_RUN, ledger=str(ledger)))
        assert main.main(["run", "--config", str(path), "--output", str(tmp_path / "out")]) == EXIT_OK
        assert [r["experiment"] for r in db.get_recent_runs(path=ledger)] == ["simulate"]
        assert db.get_recent_runs() == []
        capsys.readouterr()
        assert main.main(["runs", "--config", str(path)]) == 0
        assert str(tmp_path / "out") in capsys.readouterr().out

    def test_empty_ledger_listing(self, capsys):
        assert main.main(["runs", "--limit", "5"]) == 0
        assert "No runs recorded yet." in capsys.readouterr().out
