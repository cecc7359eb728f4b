"""
Tests for Lebesgue, Besov and time-space norms.
"""
import json
import math

import numpy as np
import pandas as pd
import pytest

from besov_norms import (
    BesovParams,
    TimeSeries,
    besov_norm,
    besov_value,
    block_norms,
    chemin_lerner_norm,
    check_embeddings,
    check_minkowski_orderings,
    critical_index,
    lp_norm,
    spectral_l2_norm,
    time_lebesgue_norm,
    time_outer_norm,
    write_norm_report,
)
from errors import ConfigurationError, QuadratureError, RejectedInputError
from spectral_core import RealField


def _decaying_series(field, times, rate=1.0):
    return TimeSeries(np.asarray(times), [field * math.exp(-rate * t) for t in times])


class TestLebesgue:
    def test_lp_of_cosine(self, line):
        f = RealField(line, np.cos(line.coordinates[0]))
        assert math.isclose(lp_norm(f, 2), math.sqrt(math.pi), rel_tol=1e-12)
        assert math.isclose(lp_norm(f, math.inf), 1.0, rel_tol=1e-12)

    def test_parseval_matches_quadrature(self, plane_fields):
        for f in plane_fields:
            assert math.isclose(spectral_l2_norm(f), lp_norm(f, 2), rel_tol=1e-12)

    def test_exponent_below_one_rejected(self, line):
        with pytest.raises(ConfigurationError):
            lp_norm(RealField.zeros(line), 0.5)


class TestBesov:
    def test_critical_index(self):
        assert critical_index(1) == 1.5
        assert critical_index(3) == 2.5

    def test_single_block_norm(self, line, line_partition):
        # cos(6x) lives entirely in block q = 2
        f = RealField(line, np.cos(6 * line.coordinates[0]))
        norm = besov_norm(f, BesovParams(1.5), line_partition)
        assert math.isclose(norm.value, 2 ** 3 * math.sqrt(math.pi), rel_tol=1e-12)
        assert norm.q_range == (-1, line_partition.q_max)

    @pytest.mark.parametrize("params", [BesovParams(1.5), BesovParams(1.0, math.inf, 1.0), BesovParams(-0.5, 4.0, 2.0)])
    def test_homogeneous_and_subadditive(self, plane_fields, plane_partition, params):
        f, g = plane_fields[0], plane_fields[1]
        nf = besov_value(f, params, plane_partition)
        for scale in (-3.0, 0.25):
            assert math.isclose(besov_value(f * scale, params, plane_partition), abs(scale) * nf, rel_tol=1e-12)
        total = besov_value(f + g, params, plane_partition)
        assert total <= (nf + besov_value(g, params, plane_partition)) * (1 + 1e-12)

    def test_spectral_and_physical_block_norms_agree(self, plane_fields, plane_partition):
        for f in plane_fields:
            a = block_norms(f, plane_partition, 2.0, "spectral")
            b = block_norms(f, plane_partition, 2.0, "physical")
            assert np.allclose(a, b, rtol=1e-10, atol=1e-14)

    def test_spectral_method_needs_p_two(self, plane_fields, plane_partition):
        with pytest.raises(ConfigurationError):
            block_norms(plane_fields[0], plane_partition, 4.0, "spectral")

    def test_embeddings(self, plane_fields, plane_partition):
        report = check_embeddings(plane_fields, plane_partition, s=1.0)
        sup = report.sup
        assert sup["r_monotone"] <= 1.0 + 1e-12
        assert sup["s_shift"] <= 2.0 + 1e-12
        assert all(math.isfinite(v) for v in sup.values())

    def test_write_norm_report(self, tmp_path, plane_fields, plane_partition):
        norm = besov_norm(plane_fields[0], BesovParams(2.0, math.inf, 1.0), plane_partition)
        data = json.loads(write_norm_report(tmp_path / "norm.json", norm).read_text())
        assert set(data) == {"params", "q_range", "per_q", "value"}
        assert data["params"] == {"s": 2.0, "p": "inf", "r": 1.0}
        assert data["q_range"] == [-1, plane_partition.q_max]
        assert math.isclose(data["value"], norm.value)
        table = pd.read_csv(write_norm_report(tmp_path / "norm.csv", norm))
        assert list(table.columns) == ["q", "weighted_norm"]
        assert len(table) == plane_partition.q_max + 2


class TestTimeSeries:
    def test_interpolation(self, line):
        a = RealField.zeros(line)
        b = RealField(line, np.ones(line.shape))
        series = TimeSeries(np.array([0.0, 1.0]), [a, b])
        assert np.allclose(series.at(0.25).samples, 0.25)

    def test_rejects_bad_times(self, line):
        f = RealField.zeros(line)
        with pytest.raises(RejectedInputError):
            TimeSeries(np.array([0.1, 0.2]), [f, f])
        with pytest.raises(RejectedInputError):
            TimeSeries(np.array([0.0, 0.0]), [f, f])

    def test_query_outside_horizon(self, line):
        f = RealField.zeros(line)
        with pytest.raises(RejectedInputError):
            TimeSeries(np.array([0.0, 1.0]), [f, f]).at(1.5)


class TestTimeNorms:
    def test_linf_chemin_lerner_of_constant_series(self, plane_fields, plane_partition):
        f = plane_fields[1]
        series = TimeSeries(np.linspace(0.0, 1.0, 5), [f] * 5)
        params = BesovParams(2.0)
        assert math.isclose(chemin_lerner_norm(series, params, math.inf, plane_partition),
                            besov_value(f, params, plane_partition), rel_tol=1e-12)

    def test_l1_time_norm_of_constant(self, plane_fields, plane_partition):
        f = plane_fields[1]
        series = TimeSeries(np.linspace(0.0, 0.5, 6), [f] * 6)
        params = BesovParams(2.0)
        assert math.isclose(chemin_lerner_norm(series, params, 1.0, plane_partition),
                            0.5 * besov_value(f, params, plane_partition), rel_tol=1e-12)

    def test_single_snapshot_needs_infinite_exponent(self, plane_fields, plane_partition):
        series = TimeSeries(np.array([0.0]), [plane_fields[0]])
        with pytest.raises(QuadratureError):
            chemin_lerner_norm(series, BesovParams(1.0), 1.0, plane_partition)

    @pytest.mark.parametrize("r, rho", [(1.0, math.inf), (2.0, 1.0), (1.0, 1.0)])
    def test_minkowski_orderings(self, plane_fields, plane_partition, r, rho):
        series = _decaying_series(plane_fields[0], np.linspace(0.0, 1.0, 11), rate=3.0)
        report = check_minkowski_orderings(series, BesovParams(1.0, 2.0, r), rho, plane_partition)
        assert report.holds

    def test_time_lebesgue_norm(self, line):
        f = RealField(line, np.ones(line.shape))
        series = TimeSeries(np.linspace(0.0, 2.0, 3), [f] * 3)
        assert math.isclose(time_lebesgue_norm(series, math.inf, 1.0), 2.0, rel_tol=1e-12)

    def test_time_outer_norm_of_decay(self, plane_fields, plane_partition):
        f = plane_fields[2]
        series = _decaying_series(f, np.linspace(0.0, 1.0, 3))
        params = BesovParams(1.0)
        assert math.isclose(time_outer_norm(series, params, math.inf, plane_partition),
                            besov_value(f, params, plane_partition), rel_tol=1e-12)
