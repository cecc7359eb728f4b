"""
Tests for the transport, acoustic, heat and field-evolution solvers.
"""
import math

import numpy as np
import pytest

from besov_norms import TimeSeries
from errors import CFLViolationError, ComponentMismatchError, ConfigurationError, RejectedInputError
from linear_solvers import (
    Scheme,
    TimeStepper,
    heat_estimate_witness,
    load_series,
    save_series,
    solve_acoustic_transport,
    solve_e_evolution,
    solve_heat,
    solve_transport,
)
from spectral_core import Grid, RealField


def _ones(grid, components=1):
    return RealField(grid, np.ones((components,) + grid.shape))


class TestTimeStepper:
    def test_steps_and_snapshots(self):
        ts = TimeStepper(0.03, 0.1, snapshot_stride=2)
        assert ts.n_steps == 4
        assert math.isclose(ts.step, 0.025)
        assert ts.snapshot_steps() == [0, 2, 4]
        assert np.allclose(ts.snapshot_times(), [0.0, 0.05, 0.1])

    def test_last_step_always_recorded(self):
        assert TimeStepper(0.1, 0.5, snapshot_stride=2).snapshot_steps() == [0, 2, 4, 5]

    @pytest.mark.parametrize("kwargs", [{"dt": 0.0, "t_end": 1.0}, {"dt": 0.1, "t_end": -1.0},
                                        {"dt": 0.1, "t_end": 1.0, "cfl_safety": 1.5}])
    def test_rejects_bad_settings(self, kwargs):
        with pytest.raises(ConfigurationError):
            TimeStepper(**kwargs)


class TestTransport:
    def test_translation_over_one_period(self, line):
        x = line.coordinates[0]
        a0 = RealField(line, np.cos(x))
        ts = TimeStepper(0.5 * line.spacing, 2 * math.pi, snapshot_stride=1000)
        out = solve_transport(a0, _ones(line), None, ts)
        assert np.max(np.abs(out.fields[-1].samples - a0.samples)) < 1e-6

    def test_cfl_violation_suggests_a_step(self, line):
        ts = TimeStepper(2 * line.spacing, 1.0)
        with pytest.raises(CFLViolationError) as info:
            solve_transport(RealField.zeros(line), _ones(line), None, ts)
        assert info.value.suggested_dt <= 0.5 * line.spacing * (1 + 1e-12)

    def test_pure_forcing(self, plane, plane_fields):
        g = plane_fields[0]
        out = solve_transport(RealField.zeros(plane), RealField.zeros(plane, 2),
                              lambda t: g * math.cos(t), TimeStepper(0.05, 1.0))
        assert np.max(np.abs(out.fields[-1].samples - math.sin(1.0) * g.samples)) < 1e-6

    def test_forcing_must_cover_horizon(self, line):
        f = RealField.zeros(line)
        short = TimeSeries(np.array([0.0, 0.5]), [f, f])
        with pytest.raises(RejectedInputError):
            solve_transport(f, RealField.zeros(line), short, TimeStepper(0.1, 1.0))

    def test_mean_is_conserved_by_divergence_free_flow(self, plane, plane_fields):
        X, Y = plane.coordinates
        v = RealField(plane, np.stack([np.sin(Y), np.sin(X)]))
        a0 = plane_fields[1] + 1.0
        out = solve_transport(a0, v, None, TimeStepper(0.02, 0.4))
        assert abs(out.fields[-1].samples.mean() - a0.samples.mean()) < 1e-12


class TestAcoustic:
    def test_standing_wave(self, line):
        x = line.coordinates[0]
        rho, u = solve_acoustic_transport(RealField(line, np.cos(x)), RealField.zeros(line), None, None,
                                          1.0, TimeStepper(0.01, 1.0))
        assert np.max(np.abs(rho.fields[-1].samples[0] - math.cos(1.0) * np.cos(x))) < 1e-8
        assert np.max(np.abs(u.fields[-1].samples[0] - math.sin(1.0) * np.sin(x))) < 1e-8

    def test_sound_speed_enters_cfl(self, line):
        ts = TimeStepper(0.4 * line.spacing, 0.1)
        with pytest.raises(CFLViolationError):
            solve_acoustic_transport(RealField.zeros(line), RealField.zeros(line), None, None, 4.0, ts)

    def test_component_check(self, plane):
        with pytest.raises(ComponentMismatchError):
            solve_acoustic_transport(RealField.zeros(plane), RealField.zeros(plane), None, None, 1.0,
                                     TimeStepper(0.01, 0.1))


class TestHeat:
    def test_exponential_eigenmode(self, line):
        x = line.coordinates[0]
        out = solve_heat(RealField(line, np.cos(3 * x)), 1.0, None,
                         TimeStepper(0.05, 0.5, Scheme.EXPONENTIAL_RK4))
        assert np.max(np.abs(out.fields[-1].samples[0] - math.exp(-4.5) * np.cos(3 * x))) < 1e-12

    def test_exponential_is_stable_for_large_steps(self, line):
        x = line.coordinates[0]
        out = solve_heat(RealField(line, np.cos(20 * x)), 10.0, None,
                         TimeStepper(0.5, 1.0, Scheme.EXPONENTIAL_RK4))
        assert np.max(np.abs(out.fields[-1].samples)) < 1e-12

    def test_explicit_stability_limit(self, line):
        with pytest.raises(CFLViolationError):
            solve_heat(RealField.zeros(line), 1.0, None, TimeStepper(0.01, 0.1, Scheme.RK4_EXPLICIT))

    def test_explicit_eigenmode(self, line):
        x = line.coordinates[0]
        out = solve_heat(RealField(line, np.cos(3 * x)), 1.0, None,
                         TimeStepper(0.001, 0.1, Scheme.RK4_EXPLICIT))
        assert np.max(np.abs(out.fields[-1].samples[0] - math.exp(-0.9) * np.cos(3 * x))) < 1e-9

    def test_fourth_order_in_time(self):
        grid = Grid(1, 32)
        x = grid.coordinates[0]

        def error(dt):
            forcing = lambda t: RealField(grid, (math.cos(t) + math.sin(t)) * np.cos(x))  # noqa: E731
            out = solve_heat(RealField.zeros(grid), 1.0, forcing, TimeStepper(dt, 1.0, Scheme.EXPONENTIAL_RK4))
            return np.max(np.abs(out.fields[-1].samples[0] - math.sin(1.0) * np.cos(x)))

        assert error(0.1) / error(0.05) > 7.2

    @pytest.mark.parametrize("scheme, dt", [(Scheme.EXPONENTIAL_RK4, 0.05), (Scheme.RK4_EXPLICIT, 0.001)])
    def test_energy_decays_every_step(self, plane_fields, scheme, dt):
        out = solve_heat(plane_fields[2], 1.0, None, TimeStepper(dt, 0.2, scheme))
        energy = [float(np.sum(f.samples ** 2)) for f in out.fields]
        assert len(energy) == TimeStepper(dt, 0.2).n_steps + 1
        assert all(b <= a * (1 + 1e-14) for a, b in zip(energy, energy[1:]))
        assert energy[-1] < energy[0]

    def test_rejects_non_positive_diffusivity(self, line):
        with pytest.raises(ConfigurationError):
            solve_heat(RealField.zeros(line), 0.0, None, TimeStepper(0.1, 1.0))

    def test_smoothing_witness(self, plane_partition, plane_fields):
        cases = [(f, (lambda t, g=f: g * math.cos(t))) for f in plane_fields]
        ts = TimeStepper(0.02, 0.1)
        for alpha in (1.0, math.inf):
            report = heat_estimate_witness(cases, 11.0, ts, plane_partition, 2.0, alpha)
            assert all(math.isfinite(r) and r > 0 for r in report.ratios)
        with pytest.raises(ConfigurationError):
            heat_estimate_witness(cases, 11.0, ts, plane_partition, 2.0, 2.0)


class TestFieldEvolution:
    def test_gradient_flux_drives_field(self, line):
        x = line.coordinates[0]
        flux = RealField(line, np.cos(x))
        out = solve_e_evolution(RealField.zeros(line), lambda t: flux, TimeStepper(0.1, 0.5))
        assert np.max(np.abs(out.fields[-1].samples[0] + 0.5 * np.cos(x))) < 1e-12

    def test_solenoidal_flux_is_invisible(self, plane):
        X, Y = plane.coordinates
        swirl = RealField(plane, np.stack([np.sin(Y), np.sin(X)]))
        out = solve_e_evolution(RealField.zeros(plane, 2), lambda t: swirl, TimeStepper(0.1, 0.5))
        assert np.max(np.abs(out.fields[-1].samples)) < 1e-12


class TestSeriesFiles:
    def test_save_and_load(self, tmp_path, plane_fields):
        series = TimeSeries(np.array([0.0, 0.1, 0.2]), plane_fields)
        index = save_series(tmp_path, series, "rho")
        assert index.name == "rho_index.json"
        back = load_series(index)
        assert np.allclose(back.times, series.times)
        assert all(np.array_equal(a.samples, b.samples) for a, b in zip(back.fields, series.fields))

