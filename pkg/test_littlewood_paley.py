"""
Tests for the dyadic partition and the block operators.
"""
import math

import numpy as np
import pytest

from bony_calculus import random_bandlimited_field
from errors import GridMismatchError
from littlewood_paley import (
    bernstein_check,
    build_partition,
    check_almost_orthogonality,
    check_product_support,
    chi,
    decompose,
    decomposition_table,
    delta_q,
    phi,
    s_q,
    top_block_index,
)
from spectral_core import Grid, RealField, dealias


class TestProfiles:
    def test_chi_plateaus(self):
        assert np.all(chi(np.array([0.0, 0.5, 0.75])) == 1.0)
        assert np.all(chi(np.array([4.0 / 3.0, 2.0, 10.0])) == 0.0)

    def test_chi_is_monotone(self):
        r = np.linspace(0.0, 2.0, 401)
        assert np.all(np.diff(chi(r)) <= 0)

    def test_phi_support(self):
        assert np.all(phi(np.array([0.1, 0.7, 8.0 / 3.0, 5.0])) == 0.0)
        assert phi(np.array([1.5]))[0] > 0.0


class TestPartition:
    @pytest.mark.parametrize("n, expected", [(16, 2), (32, 3), (64, 4), (128, 5)])
    def test_top_block_index(self, n, expected):
        assert top_block_index(Grid(1, n)) == expected

    @pytest.mark.parametrize("dim, n", [(1, 64), (1, 256), (2, 32), (3, 16)])
    def test_partition_of_unity(self, dim, n):
        assert build_partition(Grid(dim, n)).partition_residual() < 1e-12

    def test_blocks_vanish_outside_dealiased_set(self, plane_partition, plane):
        outside = plane.dealias_mask == 0
        for q in plane_partition.q_range:
            assert np.all(plane_partition.block_multiplier(q)[outside] == 0.0)

    def test_block_support_is_dyadic(self, line_partition):
        low, high = line_partition.block_support(2)
        assert low >= 0.75 * 4
        assert high <= 8.0 / 3.0 * 4

    def test_low_pass_is_sum_of_lower_blocks(self, plane_partition, plane_fields):
        f = plane_fields[0]
        total = sum(delta_q(f, p, plane_partition).samples for p in (-1, 0, 1))
        assert np.max(np.abs(s_q(f, 2, plane_partition).samples - total)) < 1e-13

    def test_reconstruction(self, plane_partition, plane, rng):
        f = RealField(plane, rng.standard_normal(plane.shape))
        rebuilt = decompose(f, plane_partition).reconstruct()
        assert np.max(np.abs(rebuilt.samples - dealias(f).samples)) < 1e-12

    def test_partition_must_match_grid(self, line_partition):
        with pytest.raises(GridMismatchError):
            delta_q(RealField.zeros(Grid(1, 32)), 0, line_partition)


class TestDiagnostics:
    def test_almost_orthogonality(self, plane_partition, plane_fields):
        for f in plane_fields:
            report = check_almost_orthogonality(f, plane_partition)
            assert report.far_pairs > 0
            assert report.max_far_ratio < 1e-12
            assert report.max_adjacent_ratio > 0.0

    def test_product_support(self, rng):
        grid = Grid(1, 256)
        partition = build_partition(grid)
        f = random_bandlimited_field(grid, rng, -1.0)
        g = random_bandlimited_field(grid, rng, -1.0)
        assert check_product_support(f, g, partition) < 1e-12

    def test_bernstein_ratios_are_two_sided(self, plane_partition, plane_fields):
        report = bernstein_check(plane_fields, plane_partition, order=1)
        assert report.lower >= 0.75 / math.sqrt(2) - 1e-12
        assert report.upper <= 8.0 / 3.0 + 1e-12

    def test_decomposition_table(self, line_partition, line):
        x = line.coordinates[0]
        table = decomposition_table(RealField(line, np.cos(6 * x)), line_partition)
        assert list(table["q"]) == list(line_partition.q_range)
        busy = table.loc[table["L2_norm"] > 1e-12, "q"].tolist()
        assert busy == [2]
