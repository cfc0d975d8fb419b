import math

import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from app.exceptions import BoundViolationError, InvalidArgumentError, ResourceLimitError
from app.services.dist import ceil_cn, make_explicit, make_pc, make_uniform, make_zipf
from app.services.estimators import GoodTuringEstimator, parse_estimator
from app.services.risk import (
    asymptotic_risk_gt,
    brute_force_risk,
    eq20_decay,
    exact_bias_gt,
    exact_risk_gt,
    exact_risk_gt_uniform,
    expected_occupancy,
    expected_phi1_squared,
    gt_upper_bound_constant,
    lemma1_check,
    lemma2_check,
    maximize_uniform_coefficient,
    second_moment_term,
    uniform_coefficient,
    uniform_family_risk,
)

GT = GoodTuringEstimator()


class TestExactRisk:
    def test_uniform_two_symbols_two_draws(self, uniform2):
        report = exact_risk_gt(uniform2, 2)
        assert report.risk == pytest.approx(0.625, rel=1e-12)
        assert report.normalized_risk == pytest.approx(1.25, rel=1e-12)
        assert report.method == "exact"

    def test_point_mass(self, point_mass):
        assert exact_risk_gt(point_mass, 10).risk == 0.0

    def test_needs_two_draws(self, uniform2):
        with pytest.raises(InvalidArgumentError):
            exact_risk_gt(uniform2, 1)

    def test_term_breakdown_adds_up(self):
        report = exact_risk_gt(make_zipf(40, 1.2), 30)
        aux = report.aux
        assert aux["pair_term"] + aux["diagonal_term"] == pytest.approx(report.risk, rel=1e-12)
        assert aux["diagonal_term"] == pytest.approx((aux["first_moment_term"] + aux["second_moment_term"]) / 30)
        assert aux["decay_term"] == pytest.approx(eq20_decay(make_zipf(40, 1.2), 30), rel=1e-12)

    def test_grouped_and_ungrouped_sums_agree(self, small_distributions):
        for d in small_distributions[:20]:
            grouped = exact_risk_gt(d, 25).risk
            ungrouped = exact_risk_gt(d, 25, group_classes=False).risk
            assert ungrouped == pytest.approx(grouped, rel=1e-10, abs=1e-15)

    def test_partitioning_does_not_change_the_result(self, settings, monkeypatch):
        d = make_zipf(300, 0.8)
        reference = exact_risk_gt(d, 200, group_classes=False).risk
        monkeypatch.setattr(settings, "PAIR_SUM_CHUNK", 7)
        chunked = exact_risk_gt(d, 200, group_classes=False, workers=4).risk
        assert chunked == pytest.approx(reference, rel=1e-12)

    def test_worst_uniform_family_at_large_n(self):
        n = 10_000
        report = exact_risk_gt(make_uniform(ceil_cn(1.1729, n)), n)
        assert 0.60 <= report.normalized_risk <= 0.615
        assert report.normalized_risk == pytest.approx(0.6080, rel=0.01)

    def test_finite_n_upper_bound(self, small_distributions):
        bound = gt_upper_bound_constant() + 0.05
        for d in small_distributions[:30]:
            assert exact_risk_gt(d, 1000).normalized_risk <= bound
        for c in (0.5, 1.0, 1.1729, 2.0, 5.0):
            assert uniform_family_risk(c, 2000).normalized_risk <= bound


class TestUniformClosedForm:
    def test_two_symbols(self):
        assert exact_risk_gt_uniform(2, 2).risk == pytest.approx(0.625, rel=1e-12)

    @pytest.mark.parametrize("n", [2, 5, 100])
    def test_single_symbol(self, n):
        assert exact_risk_gt_uniform(1, n).risk == 0.0

    @pytest.mark.parametrize("k,n", [(1000, 853), (3, 4), (2000, 1500), (200, 400), (50, 2)])
    def test_matches_pair_sum(self, k, n):
        fast = exact_risk_gt_uniform(k, n).risk
        slow = exact_risk_gt(make_uniform(k), n, group_classes=False).risk
        assert fast == pytest.approx(slow, rel=1e-12)

    def test_uniform_family(self):
        report = uniform_family_risk(1.1729, 1000)
        assert report.dist_descriptor == "uniform-cn:1.1729:1173"
        assert report.risk == pytest.approx(exact_risk_gt_uniform(1173, 1000).risk, rel=1e-15)


class TestAsymptoticRisk:
    def test_uniform_two_symbols(self, uniform2):
        report = asymptotic_risk_gt(uniform2, 2)
        assert report.risk == pytest.approx(0.25, rel=1e-12)
        assert report.aux["expected_phi1_squared"] == pytest.approx(2.0, rel=1e-12)

    def test_point_mass(self, point_mass):
        assert asymptotic_risk_gt(point_mass, 10).risk == 0.0

    def test_close_to_exact_for_worst_uniform(self):
        d = make_uniform(1173)
        gap = abs(asymptotic_risk_gt(d, 1000).risk - exact_risk_gt(d, 1000).risk)
        assert 1000 * gap < 0.05

    def test_remainder_shrinks_with_n(self):
        gaps = []
        for n in (100, 1000, 10_000):
            d = make_uniform(ceil_cn(1.1729, n))
            gaps.append(n * abs(asymptotic_risk_gt(d, n).risk - exact_risk_gt(d, n).risk))
        assert gaps[0] > gaps[1] > gaps[2]

    def test_expected_occupancies_conserve_n(self):
        d = make_zipf(30, 1.0)
        n = 20
        total = sum(i * expected_occupancy(d, n, i) for i in range(1, n + 1))
        assert total == pytest.approx(n, rel=1e-12)

    def test_expected_phi1_squared_dominates_square_of_mean(self):
        d = make_pc(0.6, 50)
        assert expected_phi1_squared(d, 40) >= expected_occupancy(d, 40, 1) ** 2


class TestBias:
    def test_point_mass(self, point_mass):
        assert exact_bias_gt(point_mass, 5) == 0.0

    def test_uniform_two_symbols(self, uniform2):
        assert exact_bias_gt(uniform2, 2) == pytest.approx(0.25, rel=1e-15)

    def test_matches_occupancy_expectations(self):
        d = make_pc(0.5, 3)
        n = 4
        # E[Phi_1/n] - E[M0] via the occupancy expectations
        expected_m0 = sum(p * (1 - p) ** n for p in d.probs)
        assert exact_bias_gt(d, n) == pytest.approx(expected_occupancy(d, n, 1) / n - expected_m0, rel=1e-12)

    @pytest.mark.parametrize("n", [2, 10, 100, 1000])
    def test_bias_bound(self, bias_distributions, n):
        for d in bias_distributions:
            bias = exact_bias_gt(d, n)
            assert 0.0 <= bias <= 1.0 / n


class TestCoefficient:
    def test_known_values(self):
        assert uniform_coefficient(1.1729) == pytest.approx(0.6080, abs=1e-4)
        assert uniform_coefficient(1e-6) == pytest.approx(0.0, abs=1e-12)
        assert uniform_coefficient(1.0) == pytest.approx(2 * math.exp(-1) - math.exp(-2), rel=1e-14)

    @pytest.mark.parametrize("c", [0.0, -1.0])
    def test_rejects_nonpositive(self, c):
        with pytest.raises(InvalidArgumentError):
            uniform_coefficient(c)

    def test_maximizer(self):
        result = maximize_uniform_coefficient()
        assert result.c_star == pytest.approx(1.1729, abs=1e-3)
        assert result.value == pytest.approx(0.6080, abs=1e-4)
        assert result.value >= uniform_coefficient(result.c_star + 0.01)
        assert result.value >= uniform_coefficient(result.c_star - 0.01)
        assert abs(result.derivative) < 1e-6
        assert result.unimodal_ok
        assert result.value < gt_upper_bound_constant()

    def test_upper_bound_constant(self):
        assert gt_upper_bound_constant() == pytest.approx(0.25 + math.exp(-1.0), abs=1e-15)
        assert gt_upper_bound_constant() == pytest.approx(0.61787944117144233, abs=1e-12)


class TestBruteForce:
    def test_uniform_two_symbols(self, uniform2):
        assert brute_force_risk(uniform2, 2, GT).risk == pytest.approx(0.625, rel=1e-12)

    def test_point_mass(self, point_mass):
        assert brute_force_risk(point_mass, 3, GT).risk == 0.0

    def test_single_draw(self, uniform2):
        # one draw: Phi_1/n = 1 while half the mass is missing
        assert brute_force_risk(uniform2, 1, GT).risk == pytest.approx(0.25)

    def test_dirichlet_estimator(self, uniform2):
        report = brute_force_risk(uniform2, 1, parse_estimator("dirichlet:1:2"))
        assert report.risk == pytest.approx((1 / 3 - 1 / 2) ** 2, rel=1e-14)

    def test_skips_zero_probability_symbols(self, uniform2):
        d = make_explicit([0.5, 0.0, 0.5])
        assert brute_force_risk(d, 3, GT).risk == pytest.approx(exact_risk_gt(uniform2, 3).risk, rel=1e-12)

    def test_guard(self):
        with pytest.raises(ResourceLimitError):
            brute_force_risk(make_uniform(10), 8, GT)

    @pytest.mark.parametrize("k", [2, 3, 4])
    @pytest.mark.parametrize("n", range(2, 9))
    def test_matches_exact_formula(self, k, n):
        if k**n > 10**6:
            pytest.skip("outside the enumeration range")
        d = make_uniform(k)
        assert brute_force_risk(d, n, GT).risk == pytest.approx(exact_risk_gt(d, n).risk, rel=1e-10)

    @pytest.mark.parametrize("d,n", [(make_pc(0.6, 3), 5), (make_zipf(4, 1.0), 6), (make_explicit([0.7, 0.2, 0.1]), 7)])
    def test_matches_exact_formula_off_uniform(self, d, n):
        assert brute_force_risk(d, n, GT).risk == pytest.approx(exact_risk_gt(d, n).risk, rel=1e-10)


class TestInequalities:
    def test_pair_inequality_point_mass(self, point_mass):
        check = lemma2_check(point_mass, 2, 3, 7)
        assert check.lhs == 0.0
        assert check.holds

    def test_pair_inequality_hand_case(self, uniform2):
        check = lemma2_check(uniform2, 1, 1, 0)
        assert check.lhs == pytest.approx(0.5)
        assert check.bound == pytest.approx(1.0)

    def test_univariate_inequality_hand_cases(self, uniform2, small_distributions):
        check = lemma1_check(uniform2, 2, 1)
        assert check.lhs == pytest.approx(0.25)
        assert check.bound == pytest.approx(0.5)
        for d in small_distributions[:10]:
            check = lemma1_check(d, 1, 0)
            assert check.lhs == pytest.approx(1.0)
            assert check.bound == pytest.approx(1.0)

    @pytest.mark.parametrize("n", [0, 1, 10, 200])
    def test_seeded_sweep(self, small_distributions, n):
        for d in small_distributions:
            for i in range(1, 5):
                assert lemma1_check(d, i, n).holds
                for j in range(1, 5):
                    assert lemma2_check(d, i, j, n).holds

    @hypothesis_settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=30).filter(lambda w: sum(w) > 1e-3),
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=0, max_value=500),
    )
    def test_property(self, weights, i, j, n):
        d = make_explicit(np.asarray(weights) / math.fsum(weights))
        assert lemma1_check(d, i, n).holds
        assert lemma2_check(d, i, j, n).holds

    def test_violation_raises(self, uniform2, settings, monkeypatch):
        monkeypatch.setattr(settings, "INEQUALITY_RTOL", -0.5)
        with pytest.raises(BoundViolationError):
            lemma1_check(uniform2, 1, 0)

    def test_violation_reported_when_not_strict(self, uniform2, settings, monkeypatch):
        monkeypatch.setattr(settings, "INEQUALITY_RTOL", -0.9)
        check = lemma1_check(uniform2, 1, 0, strict=False)
        assert check.lhs == pytest.approx(1.0)
        assert not check.holds
        assert not lemma2_check(uniform2, 1, 1, 0, strict=False).holds
        assert not second_moment_term(make_uniform(4), 4, strict=False).holds
        with pytest.raises(BoundViolationError):
            second_moment_term(make_uniform(4), 4)

    def test_rejects_bad_exponents(self, uniform2):
        with pytest.raises(InvalidArgumentError):
            lemma2_check(uniform2, 0, 1, 3)

    def test_second_moment_term(self, small_distributions):
        for n in (1, 10, 1000):
            assert second_moment_term(make_uniform(n), n).lhs <= math.exp(-1.0)
            for d in small_distributions[:20]:
                assert second_moment_term(d, n).holds


class TestDecay:
    def test_point_mass(self, point_mass):
        assert eq20_decay(point_mass, 10) == 0.0

    def test_hand_case(self, uniform2):
        assert eq20_decay(uniform2, 2) == pytest.approx(1.0, rel=1e-15)

    def test_decreasing_in_n(self):
        d = make_uniform(100)
        values = [eq20_decay(d, n) for n in (100, 1000, 10_000)]
        assert values[0] > values[1] > values[2]
