"""
Tests for the paraproduct split and the inequality witnesses.
"""
import math

import numpy as np
import pytest

from besov_norms import BesovParams, TimeSeries, critical_index
from bony_calculus import (
    bony_split,
    commutator_check,
    compose_h1,
    compose_h2,
    composition_check,
    derivative_check,
    moser_check_chemin_lerner,
    moser_check_classical,
    moser_check_generalized,
    paraproduct,
    random_bandlimited_field,
    random_ensemble,
    refinement_stability,
    remainder,
    remainder_regularity_check,
)
from errors import ComponentMismatchError, ConfigurationError, RejectedInputError
from littlewood_paley import build_partition, delta_q
from spectral_core import Grid, RealField, forward_coefficients, prolong


@pytest.fixture
def pairs(plane):
    return random_ensemble(plane, 8, seed=3)


class TestBonySplit:
    def test_exact_reconstruction(self, pairs, plane_partition):
        for f, g in pairs:
            assert bony_split(f, g, plane_partition).reconstruction_error() < 1e-12

    def test_pieces_match_standalone_operators(self, pairs, plane_partition):
        f, g = pairs[0]
        split = bony_split(f, g, plane_partition)
        assert np.allclose(split.t_f_g.samples, paraproduct(f, g, plane_partition).samples, atol=1e-13)
        assert np.allclose(split.r_f_g.samples, remainder(f, g, plane_partition).samples, atol=1e-13)

    def test_scalar_times_vector(self, plane, plane_partition):
        f, g = random_ensemble(plane, 1, seed=5, components=(1, 2))[0]
        split = bony_split(f, g, plane_partition)
        assert split.product.components == 2
        assert split.reconstruction_error() < 1e-12

    def test_paraproduct_of_constant_drops_low_blocks(self, plane, plane_partition):
        # a constant lives in the q = -1 block, so T_1 g = g - Δ_{-1}g - Δ_0 g
        one = RealField(plane, np.ones(plane.shape))
        g = random_bandlimited_field(plane, np.random.default_rng(0), -1.0)
        expected = g.samples - delta_q(g, -1, plane_partition).samples - delta_q(g, 0, plane_partition).samples
        assert np.max(np.abs(paraproduct(one, g, plane_partition).samples - expected)) < 1e-12


class TestEnsembles:
    def test_normalised_and_seeded(self, plane):
        a = random_ensemble(plane, 3, seed=9)
        b = random_ensemble(plane, 3, seed=9)
        for (f1, g1), (f2, g2) in zip(a, b):
            assert np.array_equal(f1.samples, f2.samples)
            assert math.isclose(np.max(np.abs(g1.samples)), 1.0)

    def test_size_must_be_positive(self, plane):
        with pytest.raises(ConfigurationError):
            random_ensemble(plane, 0)


class TestProductEstimates:
    def test_classical_ratios_bounded(self, pairs, plane_partition):
        report = moser_check_classical(pairs, BesovParams(1.0), plane_partition)
        assert report.ensemble_size == len(pairs)
        assert 0.0 < report.sup_ratio < 10.0

    def test_classical_needs_positive_index(self, pairs, plane_partition):
        with pytest.raises(ConfigurationError):
            moser_check_classical(pairs, BesovParams(0.0), plane_partition)

    def test_generalized_matches_classical_for_coinciding_exponents(self, pairs, plane_partition):
        classical = moser_check_classical(pairs, BesovParams(1.0), plane_partition)
        general = moser_check_generalized(pairs, 1.0, 2.0, (math.inf, 2.0, math.inf, 2.0), 1.0, plane_partition)
        assert math.isclose(general.sup_ratio, classical.sup_ratio, rel_tol=1e-10)
        assert set(general.breakdown) >= {"T_f_g", "T_g_f", "R"}

    def test_generalized_rejects_non_holder_exponents(self, pairs, plane_partition):
        with pytest.raises(ConfigurationError):
            moser_check_generalized(pairs, 1.0, 2.0, (2.0, 2.0, math.inf, 2.0), 1.0, plane_partition)

    def test_remainder_regularity(self, pairs, plane_partition):
        report = remainder_regularity_check(pairs, 0.5, 0.5, plane_partition)
        assert all(math.isfinite(r) for r in report.ratios)

    def test_remainder_needs_positive_index_sum(self, pairs, plane_partition):
        with pytest.raises(ConfigurationError):
            remainder_regularity_check(pairs, 0.5, -0.5, plane_partition)

    def test_derivative_loses_one_index(self, pairs, plane_partition):
        report = derivative_check([f for f, _ in pairs], BesovParams(1.0), plane_partition)
        assert report.sup_ratio <= 8.0 / 3.0 * 2 + 1e-12


class TestCommutator:
    @pytest.mark.parametrize("case, shift", [("critical", 0.0), ("g_smoother", -1.0), ("f_smoother", -1.0)])
    def test_cases_finite(self, plane, plane_partition, case, shift):
        pairs = random_ensemble(plane, 4, seed=2, components=(1, 2))
        params = BesovParams(critical_index(2) + shift)
        report = commutator_check(pairs, params, plane_partition, case)
        assert all(math.isfinite(r) and r >= 0 for r in report.ratios)
        assert len(report.per_q_cq) == plane_partition.q_max + 2

    def test_wrong_index_rejected(self, plane, plane_partition):
        pairs = random_ensemble(plane, 1, seed=2, components=(1, 2))
        with pytest.raises(ConfigurationError):
            commutator_check(pairs, BesovParams(1.0), plane_partition, "critical")

    def test_vector_coefficient_rejected(self, plane, plane_partition):
        pairs = random_ensemble(plane, 1, seed=2, components=(2, 2))
        with pytest.raises(ComponentMismatchError):
            commutator_check(pairs, BesovParams(2.0), plane_partition, "critical")


class TestComposition:
    def test_h1_h2_values(self, plane):
        rho = RealField(plane, np.full(plane.shape, 0.3))
        h1 = compose_h1(rho, gamma=2.0, kappa=3.0, n_bar=1.5)
        assert np.allclose(h1.samples, 2.0 * (1 - math.exp(-0.3)))
        assert np.allclose(compose_h2(rho, 1.5).samples, 1.5 * (math.exp(0.3) - 1))
        doubled = RealField(plane, np.full(plane.shape, math.log(2.0)))
        assert np.allclose(compose_h2(doubled, 1.0).samples, 1.0)

    def test_zero_maps_to_zero(self, plane):
        rho = RealField.zeros(plane)
        assert np.max(np.abs(compose_h1(rho, 5.0 / 3.0, 1.0, 1.0).samples)) == 0.0
        assert np.max(np.abs(compose_h2(rho, 1.0).samples)) == 0.0

    def test_low_density_is_accepted(self, line):
        rho = RealField(line, np.full(line.shape, -0.8))
        assert np.allclose(compose_h1(rho, 2.0, 1.0, 1.0).samples, 1 - math.exp(0.8))

    def test_output_is_dealiased(self, line):
        rho = RealField(line, 2.0 * np.cos(20 * line.coordinates[0]))
        outside = line.dealias_mask == 0
        for h in (compose_h1(rho, 2.0, 1.0, 1.0), compose_h2(rho, 1.0)):
            assert np.max(np.abs(forward_coefficients(line, h.samples)[..., outside])) < 1e-12

    @pytest.mark.parametrize("value", [60.0, -60.0])
    def test_overflow_guard(self, plane, value):
        rho = RealField(plane, np.full(plane.shape, value))
        with pytest.raises(RejectedInputError):
            compose_h2(rho, 1.0)
        with pytest.raises(RejectedInputError):
            compose_h1(rho, 2.0, 1.0, 1.0)

    def test_composition_ratios(self, pairs, plane_partition):
        fields = [0.5 * f for f, _ in pairs]
        report = composition_check(fields, lambda r: compose_h2(r, 1.0), BesovParams(2.0), plane_partition)
        assert 0.0 < report.sup_ratio < 10.0


class TestTimeSpaceProduct:
    def test_chemin_lerner_product(self, pairs, plane_partition):
        times = np.linspace(0.0, 0.2, 5)
        series_pairs = [
            (TimeSeries(times, [f * math.cos(t) for t in times]), TimeSeries(times, [g * (1 + t) for t in times]))
            for f, g in pairs[:3]
        ]
        report = moser_check_chemin_lerner(series_pairs, 1.0, math.inf, (math.inf, math.inf, math.inf, math.inf),
                                           plane_partition)
        assert all(math.isfinite(r) and r > 0 for r in report.ratios)


class TestRefinement:
    def test_half_band_ensemble_is_resolution_independent(self, plane):
        pairs = random_ensemble(plane, 6, seed=4, band=plane.dealias_radius / 2)
        coarse = build_partition(plane)
        fine_grid = Grid(2, 64)
        fine = build_partition(fine_grid)
        fine_pairs = [(prolong(f, fine_grid), prolong(g, fine_grid)) for f, g in pairs]
        a = moser_check_classical(pairs, BesovParams(1.0), coarse)
        b = moser_check_classical(fine_pairs, BesovParams(1.0), fine)
        assert refinement_stability(a, b) < 0.25
