from __future__ import annotations

import itertools

import numpy as np
import pytest
from scipy.stats import kstest

from matchexp import (
    DataError,
    MatchSpec,
    CovariateConstraint,
    MatchedPairSet,
    TreatmentRule,
    assign_treatment,
    balance_report,
    match_pairs,
    randomization_check,
)
from matchexp.balance import _mahalanobis

from _helpers import build_dataset


def pairs_from_arrays(n, **columns):
    ds = build_dataset(n=n, **columns)
    treated = np.arange(1, n, 2)
    controls = np.arange(0, n, 2)
    return ds, MatchedPairSet(dataset=ds, pairs=np.column_stack([treated, controls]))


class TestBalanceReport:
    def label(self, ds):
        labeled, _ = assign_treatment(ds, TreatmentRule("positive_measure", "tonnage"))
        return labeled

    def test_identical_samples_give_zero_smd(self):
        temps = [15.0, 16.0, 17.0] * 2
        ds = build_dataset(
            n=6, temperature=temps, tonnage=[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]
        )
        labeled = self.label(ds)
        pairs = MatchedPairSet(dataset=labeled, pairs=np.array([[3, 0], [4, 1], [5, 2]]))
        report = balance_report(labeled, pairs, ["temperature"])
        for entry in report.entries:
            assert entry.statistic == 0.0

    def test_direct_formula_case(self):
        # treated mean 10, control mean 8, both group variances 16 -> pooled SD 4
        temps = [6.0, 10.0, 14.0, 4.0, 8.0, 12.0]
        tonnage = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]
        ds = build_dataset(n=6, temperature=temps, tonnage=tonnage)
        labeled = self.label(ds)
        pairs = MatchedPairSet(dataset=labeled, pairs=np.array([[0, 3], [1, 4], [2, 5]]))
        report = balance_report(labeled, pairs, ["temperature"])
        before = [e for e in report.entries if e.stage == "before"][0]
        assert before.statistic == pytest.approx(0.5)

    def test_matching_improves_balance_on_confounded_data(self):
        rng = np.random.default_rng(8)
        n = 4000
        temperature = rng.normal(15, 4, size=n)
        p_treat = 1 / (1 + np.exp(-(temperature - 15.0)))
        tonnage = np.where(rng.random(n) < p_treat * 0.4, 65000.0, 0.0)
        ds = build_dataset(n=n, temperature=temperature, tonnage=tonnage)
        labeled = self.label(ds)
        spec = MatchSpec(
            constraints=(CovariateConstraint("temperature", "caliper", 1.0),),
            max_distance_days=10.0,
        )
        pairs, _ = match_pairs(labeled, spec)
        assert pairs.n_pairs > 50
        report = balance_report(labeled, pairs, ["temperature"]).to_frame()
        before = report.loc[report.stage == "before", "statistic"].iloc[0]
        after = report.loc[report.stage == "after", "statistic"].iloc[0]
        assert before > 0.2
        assert after < before

    def test_zero_variance_covariate_flagged_degenerate(self):
        ds = build_dataset(n=6, temperature=[5.0] * 6, tonnage=[0, 0, 0, 1, 1, 1])
        labeled = self.label(ds)
        pairs = MatchedPairSet(dataset=labeled, pairs=np.array([[3, 0]]))
        report = balance_report(labeled, pairs, ["temperature"])
        assert all(e.degenerate for e in report.entries)
        assert all(e.statistic is None for e in report.entries)

    def test_categorical_proportions_bounded(self):
        rng = np.random.default_rng(3)
        n = 200
        ds = build_dataset(
            n=n,
            wind=list(rng.choice(["E", "W"], size=n)),
            tonnage=list(np.where(rng.random(n) < 0.4, 1.0, 0.0)),
        )
        labeled = self.label(ds)
        w = labeled.frame["treatment"]
        treated = np.flatnonzero((w == 1).to_numpy(dtype=bool))[:30]
        controls = np.flatnonzero((w == 0).to_numpy(dtype=bool))[:30]
        pairs = MatchedPairSet(dataset=labeled, pairs=np.column_stack([treated, controls]))
        report = balance_report(labeled, pairs, ["wind_direction"])
        for e in report.entries:
            assert 0.0 <= e.statistic <= 1.0
            assert e.category in {"E", "W"}


class TestRandomizationCheck:
    def test_identical_covariates_within_pairs(self):
        n = 12
        temps = np.repeat(np.arange(6, dtype=float), 2)
        ds, pairs = pairs_from_arrays(n, temperature=temps)
        result = randomization_check(pairs, ["temperature"], n_perm=200, seed=1)
        assert result.observed == 0.0
        assert result.p_value == 1.0

    def test_exhaustive_five_pair_oracle(self):
        rng = np.random.default_rng(5)
        n = 10
        temps = rng.normal(16, 3, size=n)
        no2 = rng.normal(30, 4, size=n)
        ds, pairs = pairs_from_arrays(n, temperature=temps, no2=no2)
        result = randomization_check(
            pairs, ["temperature", "no2"], n_perm=4000, seed=11
        )
        diffs = np.column_stack(
            [
                temps[pairs.treated_indices] - temps[pairs.control_indices],
                no2[pairs.treated_indices] - no2[pairs.control_indices],
            ]
        )
        null = []
        for signs in itertools.product((-1.0, 1.0), repeat=5):
            stat, _ = _mahalanobis(np.array(signs)[:, None] * diffs)
            null.append(stat)
        exact_p = np.mean(np.array(null) >= result.observed)
        assert result.p_value == pytest.approx(exact_p, abs=0.02)

    def test_affine_invariance(self):
        rng = np.random.default_rng(6)
        n = 40
        temps = rng.normal(16, 3, size=n)
        no2 = rng.normal(30, 4, size=n)
        ds1, pairs1 = pairs_from_arrays(n, temperature=temps, no2=no2)
        ds2, pairs2 = pairs_from_arrays(n, temperature=temps * 10.0, no2=no2)
        r1 = randomization_check(pairs1, ["temperature", "no2"], n_perm=50, seed=2)
        r2 = randomization_check(pairs2, ["temperature", "no2"], n_perm=50, seed=2)
        assert r1.observed == pytest.approx(r2.observed, rel=1e-8)
        np.testing.assert_allclose(r1.null_sample, r2.null_sample, rtol=1e-8)

    def test_rank_reported_for_singular_covariance(self):
        rng = np.random.default_rng(7)
        n = 30
        temps = np.repeat(rng.normal(16, 3, size=15), 2)  # zero within-pair diff
        no2 = rng.normal(30, 4, size=n)
        ds, pairs = pairs_from_arrays(n, temperature=temps, no2=no2)
        result = randomization_check(pairs, ["temperature", "no2"], n_perm=100, seed=3)
        assert result.covariance_rank == 1
        assert 0.0 <= result.p_value <= 1.0

    def test_null_sample_size_matches_request(self):
        rng = np.random.default_rng(8)
        ds, pairs = pairs_from_arrays(20, temperature=rng.normal(0, 1, 20))
        result = randomization_check(pairs, ["temperature"], n_perm=321, seed=4)
        assert len(result.null_sample) == 321

    def test_missing_pairs_dropped_and_counted(self):
        rng = np.random.default_rng(9)
        temps = rng.normal(0, 1, size=20)
        temps[3] = np.nan
        ds, pairs = pairs_from_arrays(20, temperature=temps)
        result = randomization_check(pairs, ["temperature"], n_perm=100, seed=5)
        assert result.n_dropped_missing == 1
        assert result.n_pairs_used == 9

    def test_needs_two_pairs(self):
        ds, _ = pairs_from_arrays(4)
        pairs = MatchedPairSet(dataset=ds, pairs=np.array([[1, 0]]))
        with pytest.raises(DataError):
            randomization_check(pairs, ["temperature"], n_perm=10, seed=0)

    def test_rejection_rate_calibrated_desk_scale(self):
        reps = 250
        rejections = 0
        for seed in range(reps):
            rng = np.random.default_rng(seed)
            n_pairs = 25
            diffs_base = rng.normal(0.4, 1.0, size=(n_pairs, 3))
            signs = np.where(rng.random(n_pairs) < 0.5, 1.0, -1.0)
            diffs = signs[:, None] * diffs_base  # truly randomized within pair
            temps = np.zeros(2 * n_pairs)
            no2 = np.zeros(2 * n_pairs)
            ton = np.zeros(2 * n_pairs)
            temps[1::2], no2[1::2], ton[1::2] = diffs[:, 0], diffs[:, 1], diffs[:, 2]
            ds = build_dataset(n=2 * n_pairs, temperature=temps, no2=no2)
            ds = ds.with_columns({"extra": ton})
            pairs = MatchedPairSet(
                dataset=ds,
                pairs=np.column_stack(
                    [np.arange(1, 2 * n_pairs, 2), np.arange(0, 2 * n_pairs, 2)]
                ),
            )
            result = randomization_check(
                pairs, ["temperature", "no2", "extra"], n_perm=400, seed=seed + 10_000
            )
            rejections += int(result.p_value <= 0.05)
        assert 0.02 <= rejections / reps <= 0.09

    def test_p_value_uniform_under_null_desk_scale(self):
        pvals = []
        for seed in range(200):
            rng = np.random.default_rng(seed + 555)
            n_pairs = 20
            diffs = rng.normal(0, 1.0, size=(n_pairs, 2))
            signs = np.where(rng.random(n_pairs) < 0.5, 1.0, -1.0)
            diffs = signs[:, None] * diffs
            temps = np.zeros(2 * n_pairs)
            no2 = np.zeros(2 * n_pairs)
            temps[1::2], no2[1::2] = diffs[:, 0], diffs[:, 1]
            ds = build_dataset(n=2 * n_pairs, temperature=temps, no2=no2)
            pairs = MatchedPairSet(
                dataset=ds,
                pairs=np.column_stack(
                    [np.arange(1, 2 * n_pairs, 2), np.arange(0, 2 * n_pairs, 2)]
                ),
            )
            result = randomization_check(
                pairs, ["temperature", "no2"], n_perm=300, seed=seed
            )
            pvals.append(result.p_value)
        stat = kstest(pvals, "uniform").statistic
        assert stat < 0.1
