from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchexp import (
    ConfigError,
    DataError,
    GridError,
    InferenceSettings,
    MatchedPairSet,
    SharpNullGrid,
    estimate_intervals,
    fisherian_interval,
    invert_tests,
    neyman,
    pair_differences,
    point_estimate,
    studentized_interval,
    subgroup_analysis,
    wilcoxon_statistic,
)

from _helpers import build_dataset
from _oracles import enumerate_p_functions, interval_from_p


def make_pairs(no2, pair_indices, **kwargs):
    ds = build_dataset(n=len(no2), no2=np.asarray(no2, dtype=float), **kwargs)
    return MatchedPairSet(dataset=ds, pairs=np.asarray(pair_indices), intervention_column="tonnage")


class TestPairDifferences:
    def test_simple_subtraction(self):
        pairs = make_pairs([8.0, 10.0, 11.0, 12.0], [[1, 0], [3, 2]])
        series = pair_differences(pairs, "no2", 0)
        np.testing.assert_array_equal(series.values, [2.0, 1.0])

    def test_negative_offset_uses_lagged_outcomes(self):
        no2 = np.array([5.0, 7.0, 20.0, 30.0], dtype=float)
        pairs = make_pairs(no2, [[3, 1]])
        series = pair_differences(pairs, "no2", -1)
        # treated index 3 reads t=2, control index 1 reads t=0
        np.testing.assert_array_equal(series.values, [15.0])

    def test_missing_pairs_excluded_and_counted(self):
        no2 = np.array([8.0, np.nan, 11.0, 12.0], dtype=float)
        pairs = make_pairs(no2, [[1, 0], [3, 2]])
        series = pair_differences(pairs, "no2", 0)
        assert series.n_pairs == 1
        assert series.n_dropped_missing == 1

    def test_empty_series_is_error(self):
        no2 = np.array([np.nan, np.nan], dtype=float)
        pairs = make_pairs(no2, [[1, 0]])
        with pytest.raises(DataError):
            pair_differences(pairs, "no2", 0)

    def test_injected_constant_effect_recovered(self, rng):
        d = 5.0 + rng.normal(0, 2, size=4000)
        assert point_estimate(d) == pytest.approx(5.0, abs=0.15)


class TestPointEstimate:
    def test_constant(self):
        assert point_estimate(np.array([2.0, 2.0, 2.0])) == 2.0

    def test_symmetry(self):
        assert point_estimate(np.array([0.0, 2.0])) == 1.0


class TestFisherian:
    def test_exact_matches_hand_enumeration(self):
        d = np.array([3.0, 5.0])
        result = fisherian_interval(d)
        want_up, want_lo = enumerate_p_functions(d, result.grid)
        np.testing.assert_allclose(result.p_upper, want_up, atol=1e-12)
        np.testing.assert_allclose(result.p_lower, want_lo, atol=1e-12)

    def test_exact_matches_hand_enumeration_larger(self, rng):
        d = rng.normal(1.0, 2.0, size=7)
        grid = SharpNullGrid.regular(half_width=6.0, step=0.2)
        result = invert_tests(d, grid)
        want_up, want_lo = enumerate_p_functions(d, grid.values)
        np.testing.assert_allclose(result.p_upper, want_up, atol=1e-12)
        np.testing.assert_allclose(result.p_lower, want_lo, atol=1e-12)

    def test_degenerate_constant_vector(self):
        d = np.full(12, 3.0)
        result = fisherian_interval(d)
        at_c = np.flatnonzero(result.grid == 3.0)[0]
        assert result.p_upper[at_c] == 1.0
        assert result.p_lower[at_c] == 1.0
        assert result.lower <= 3.0 <= result.upper

    def test_monte_carlo_within_002_of_exact(self, rng):
        d = rng.normal(2.0, 3.0, size=10)
        exact = fisherian_interval(d)
        mc = fisherian_interval(d, exact_cutoff=0, draws=10_000, seed=77)
        assert np.abs(exact.p_upper - mc.p_upper).max() < 0.02
        assert np.abs(exact.p_lower - mc.p_lower).max() < 0.02

    def test_p_value_functions_monotone(self, rng):
        d = rng.normal(0.5, 2.0, size=60)
        result = fisherian_interval(d, seed=5, exact_cutoff=0)
        assert np.all(np.diff(result.p_upper) >= -1e-12)
        assert np.all(np.diff(result.p_lower) <= 1e-12)

    def test_point_estimate_bracketed(self, rng):
        for seed in range(5):
            d = np.random.default_rng(seed).normal(1.0, 4.0, size=31)
            r = fisherian_interval(d, seed=seed, draws=2000)
            assert r.lower <= np.mean(d) <= r.upper

    @settings(max_examples=20, deadline=None, derandomize=True)
    @given(
        shift_steps=st.integers(min_value=-30, max_value=30),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_location_equivariance(self, shift_steps, seed):
        local = np.random.default_rng(seed)
        d = local.normal(0.0, 1.5, size=9)
        c = shift_steps * 0.1
        base = fisherian_interval(d, grid=SharpNullGrid.regular(half_width=14))
        shifted = fisherian_interval(d + c, grid=SharpNullGrid.regular(half_width=14))
        assert shifted.lower == pytest.approx(base.lower + c, abs=0.100001)
        assert shifted.upper == pytest.approx(base.upper + c, abs=0.100001)

    def test_explicit_grid_too_narrow_is_error(self):
        with pytest.raises(GridError, match="expand"):
            fisherian_interval(
                np.array([30.0, 31.0, 29.0]), grid=SharpNullGrid.regular()
            )

    def test_default_grid_widens_automatically(self):
        d = np.array([30.0, 31.0, 29.0, 30.5])
        r = fisherian_interval(d)
        assert r.grid[-1] > 30.0
        assert r.lower <= 30.0 <= r.upper

    def test_unknown_statistic_rejected(self):
        with pytest.raises(ConfigError):
            fisherian_interval(np.array([1.0, 2.0]), statistic="median")

    def test_thread_invariance(self, rng):
        d = rng.normal(1.0, 2.0, size=40)
        one = fisherian_interval(d, seed=9, exact_cutoff=0, threads=1)
        four = fisherian_interval(d, seed=9, exact_cutoff=0, threads=4)
        np.testing.assert_array_equal(one.p_upper, four.p_upper)
        np.testing.assert_array_equal(one.p_lower, four.p_lower)


class TestNeyman:
    def test_constant_series(self):
        r = neyman(np.array([1.0, 1.0, 1.0]))
        assert r.variance == 0.0
        assert (r.lower, r.upper) == (1.0, 1.0)

    def test_two_pair_formula(self):
        r = neyman(np.array([0.0, 2.0]))
        assert r.estimate == 1.0
        assert r.variance == 1.0
        assert r.lower == pytest.approx(-0.96)
        assert r.upper == pytest.approx(2.96)

    def test_single_pair_is_error(self):
        with pytest.raises(DataError, match="not defined"):
            neyman(np.array([4.0]))

    @settings(max_examples=25, deadline=None, derandomize=True)
    @given(
        c=st.floats(min_value=-50, max_value=50, allow_nan=False),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_shift_property(self, c, seed):
        d = np.random.default_rng(seed).normal(0, 3, size=12)
        base, shifted = neyman(d), neyman(d + c)
        assert shifted.estimate == pytest.approx(base.estimate + c, rel=1e-9, abs=1e-9)
        assert shifted.variance == pytest.approx(base.variance, rel=1e-9, abs=1e-12)
        assert shifted.lower == pytest.approx(base.lower + c, rel=1e-9, abs=1e-9)

    def test_general_alpha_uses_gaussian_quantile(self):
        from scipy.stats import norm

        d = np.array([0.0, 2.0, 1.0, 3.0])
        r = neyman(d, alpha=0.1)
        half = norm.ppf(0.95) * np.sqrt(r.variance)
        assert r.upper - r.estimate == pytest.approx(half)


class TestStudentized:
    def test_exact_matches_oracle(self):
        d = np.array([3.0, 5.0])
        r = studentized_interval(d)
        want_up, want_lo = enumerate_p_functions(d, r.grid, statistic="studentized")
        np.testing.assert_allclose(r.p_upper, want_up, atol=1e-12)
        np.testing.assert_allclose(r.p_lower, want_lo, atol=1e-12)
        lo, hi = interval_from_p(r.grid, want_up, want_lo)
        assert (r.lower, r.upper) == (lo, hi)

    def test_exact_matches_oracle_wider(self, rng):
        d = rng.normal(0.0, 2.0, size=6)
        grid = SharpNullGrid.regular(half_width=8, step=0.25)
        r = invert_tests(d, grid, statistic="studentized")
        want_up, want_lo = enumerate_p_functions(d, grid.values, statistic="studentized")
        np.testing.assert_allclose(r.p_upper, want_up, atol=1e-12)
        np.testing.assert_allclose(r.p_lower, want_lo, atol=1e-12)

    def test_close_to_plain_fisherian_under_constant_effect(self, rng):
        d = 5.0 + rng.normal(0, 1.0, size=120)
        plain = fisherian_interval(d, seed=4, exact_cutoff=0)
        stud = studentized_interval(d, seed=4, exact_cutoff=0)
        assert abs(plain.lower - stud.lower) <= 0.1 + 1e-12
        assert abs(plain.upper - stud.upper) <= 0.1 + 1e-12

    def test_needs_two_pairs(self):
        with pytest.raises(DataError):
            studentized_interval(np.array([1.0]))


class TestWilcoxon:
    def test_hand_ranking(self):
        assert wilcoxon_statistic(np.array([1.0, -2.0, 3.0]), 0.0) == 4.0

    def test_all_positive_is_maximum(self):
        d = np.array([0.5, 1.5, 2.5, 3.5])
        assert wilcoxon_statistic(d, 0.0) == 4 * 5 / 2

    def test_zeros_dropped(self):
        assert wilcoxon_statistic(np.array([0.0, 1.0, -2.0]), 0.0) == 1.0

    def test_ties_get_average_ranks(self):
        # |d| = [1, 1, 2]: tied ranks 1.5, 1.5, 3
        assert wilcoxon_statistic(np.array([1.0, -1.0, 2.0]), 0.0) == 1.5 + 3

    def test_degenerate_warns(self):
        with pytest.warns(UserWarning, match="degenerate"):
            wilcoxon_statistic(np.array([2.0, 2.0]), 2.0)

    def test_constant_vector_inversion_warns(self):
        with pytest.warns(UserWarning, match="degenerate"):
            fisherian_interval(
                np.full(6, 2.0), statistic="wilcoxon_signed_rank"
            )

    def test_enumeration_distribution_symmetric(self):
        # sign-symmetric d: null distribution symmetric about P(P+1)/4
        d = np.array([1.0, 2.0, 3.0, 4.0])
        from itertools import product

        stats = []
        for signs in product((-1.0, 1.0), repeat=4):
            adj = np.array(signs) * d
            stats.append(wilcoxon_statistic(adj, 0.0))
        stats = np.array(sorted(stats))
        center = 4 * 5 / 4
        np.testing.assert_allclose(stats + stats[::-1], 2 * center)

    def test_interval_matches_enumeration_oracle(self, rng):
        d = rng.normal(1.0, 2.0, size=8)
        grid = SharpNullGrid.regular(half_width=6, step=0.2)
        r = invert_tests(d, grid, statistic="wilcoxon_signed_rank")
        want_up, want_lo = enumerate_p_functions(
            d, grid.values, statistic="wilcoxon_signed_rank"
        )
        np.testing.assert_allclose(r.p_upper, want_up, atol=1e-12)
        np.testing.assert_allclose(r.p_lower, want_lo, atol=1e-12)


class TestCoverageDeskScale:
    def test_fisherian_covers_injected_effect(self):
        hits = 0
        reps = 120
        for seed in range(reps):
            local = np.random.default_rng(seed)
            d = 5.0 + local.normal(0, 1.5, size=40) - local.normal(0, 1.5, size=40)
            r = fisherian_interval(d, seed=seed + 1000, exact_cutoff=0, draws=2000)
            hits += int(r.lower <= 5.0 <= r.upper)
        assert 0.88 <= hits / reps <= 1.0

    def test_neyman_coverage_conservative_under_heterogeneity(self):
        hits = 0
        reps = 300
        for seed in range(reps):
            local = np.random.default_rng(seed)
            tau = 5.0 + local.normal(0, 2.0, size=50)
            d = tau + local.normal(0, 1.0, size=50)
            r = neyman(d)
            hits += int(r.lower <= tau.mean() <= r.upper)
        assert hits / reps >= 0.95


class TestEstimateIntervals:
    def test_full_report(self, rng):
        n = 80
        no2 = rng.normal(30, 5, size=n)
        treated = np.arange(1, n, 2)
        controls = np.arange(0, n, 2)
        no2[treated] += 4.0
        pairs = make_pairs(no2, np.column_stack([treated, controls]))
        report = estimate_intervals(
            pairs, "no2", 0, InferenceSettings(seed=3, draws=4000)
        )
        assert report.n_pairs == 40
        assert report.fisherian.lower <= report.point_estimate <= report.fisherian.upper
        assert report.studentized is not None
        assert report.neyman.lower < report.neyman.upper
        payload = report.to_dict()
        assert payload["fisherian"]["draws"] == 4000
        assert len(payload["fisherian"]["p_upper"]) == len(report.fisherian.grid)


class TestSubgroups:
    def build(self, rng, effects=(0.0, 10.0)):
        n = 120
        wind = np.where(np.arange(n) % 4 < 2, "E", "W")
        no2 = rng.normal(30, 1.0, size=n)
        treated = np.arange(1, n, 2)
        controls = np.arange(0, n, 2)
        is_west = wind[treated] == "W"
        no2[treated] += np.where(is_west, effects[1], effects[0])
        ds = build_dataset(n=n, no2=no2, wind=list(wind))
        return MatchedPairSet(
            dataset=ds,
            pairs=np.column_stack([treated, controls]),
            intervention_column="tonnage",
        )

    def test_single_group_equals_ungrouped(self, rng):
        n = 40
        no2 = rng.normal(30, 2, size=n)
        pairs = make_pairs(no2, np.column_stack([np.arange(1, n, 2), np.arange(0, n, 2)]))
        settings = InferenceSettings(seed=11, draws=2000)
        grouped = subgroup_analysis(pairs, "no2", 0, "wind_direction", settings)
        plain = estimate_intervals(pairs, "no2", 0, settings)
        assert list(grouped.reports) == ["E"]
        assert grouped.reports["E"].fisherian.lower == plain.fisherian.lower
        assert grouped.reports["E"].fisherian.upper == plain.fisherian.upper

    def test_two_groups_recover_their_effects(self, rng):
        pairs = self.build(rng)
        result = subgroup_analysis(
            pairs, "no2", 0, "wind_direction", InferenceSettings(seed=2, draws=2000)
        )
        assert result.reports["E"].point_estimate == pytest.approx(0.0, abs=0.8)
        assert result.reports["W"].point_estimate == pytest.approx(10.0, abs=0.8)
        table = result.pair_table
        assert set(table.columns) >= {
            "group",
            "outcome_difference",
            "intervention_difference",
        }

    def test_group_varying_within_pair_rejected(self, rng):
        n = 8
        wind = ["E", "W"] * 4  # treated and control differ within each pair
        ds = build_dataset(n=n, wind=wind)
        pairs = MatchedPairSet(
            dataset=ds, pairs=np.column_stack([np.arange(1, n, 2), np.arange(0, n, 2)])
        )
        with pytest.raises(DataError, match="varies within"):
            subgroup_analysis(pairs, "no2", 0, "wind_direction")

    def test_small_group_skipped(self, rng):
        n = 12
        wind = ["E"] * 10 + ["W"] * 2
        no2 = rng.normal(30, 2, size=n)
        ds = build_dataset(n=n, no2=no2, wind=wind)
        pairs = MatchedPairSet(
            dataset=ds, pairs=np.column_stack([np.arange(1, n, 2), np.arange(0, n, 2)])
        )
        result = subgroup_analysis(
            pairs, "no2", 0, "wind_direction", InferenceSettings(seed=1, draws=500)
        )
        assert result.skipped == {"W": 1}
        assert "E" in result.reports
