from __future__ import annotations

import numpy as np
import pytest

from matchexp import (
    ConfigError,
    DataError,
    ExperimentDesign,
    TimeSeriesDataset,
    TreatmentRule,
    assign_treatment,
    generate,
)
from matchexp.synth import SynthConfig

from _helpers import build_dataset


class TestPositiveMeasure:
    def test_positive_tonnage_is_treated(self, make_dataset):
        ds = make_dataset(n=4, tonnage=[0.0, 65000.0, 0.0, 130000.0])
        labeled, summary = assign_treatment(ds, TreatmentRule("positive_measure", "tonnage"))
        assert labeled.frame["treatment"].tolist() == [0, 1, 0, 1]
        assert (summary.n_treated, summary.n_control, summary.n_excluded) == (2, 2, 0)

    def test_no_exclusions_when_fully_observed(self, make_dataset):
        ds = make_dataset(n=10)
        _, summary = assign_treatment(ds, TreatmentRule("positive_measure", "tonnage"))
        assert summary.n_excluded == 0

    def test_indicator_matches_positive_measure_exhaustively(self, rng):
        values = np.round(np.abs(rng.normal(0, 1, size=200)), 1)
        values[rng.random(200) < 0.5] = 0.0
        ds = build_dataset(n=200, tonnage=values)
        labeled, _ = assign_treatment(ds, TreatmentRule("positive_measure", "tonnage"))
        w = labeled.frame["treatment"].to_numpy(dtype=float)
        np.testing.assert_array_equal(w, (values > 0).astype(float))

    def test_missing_intervention_excluded(self, make_dataset):
        ds = make_dataset(n=3, tonnage=[0.0, np.nan, 65000.0])
        labeled, summary = assign_treatment(ds, TreatmentRule("positive_measure", "tonnage"))
        assert labeled.frame["treatment"].isna().tolist() == [False, True, False]
        assert summary.n_excluded == 1
        assert summary.n_missing_intervention == 1


class TestExactCount:
    def test_two_arrivals_excluded(self, make_dataset):
        counts = [0.0, 1.0, 2.0, 1.0, 3.0, 0.0]
        ds = make_dataset(n=6, tonnage=counts)
        labeled, summary = assign_treatment(ds, TreatmentRule("exact_count", "tonnage"))
        w = labeled.frame["treatment"]
        assert w.tolist()[:2] == [0, 1]
        assert w.isna().tolist() == [False, False, True, False, True, False]
        # excluded count equals the direct scan of counts >= 2
        assert summary.n_excluded == sum(1 for c in counts if c >= 2)

    def test_partition_property(self, rng):
        counts = rng.integers(0, 4, size=500).astype(float)
        counts[rng.random(500) < 0.05] = np.nan
        ds = build_dataset(n=500, tonnage=counts)
        _, summary = assign_treatment(ds, TreatmentRule("exact_count", "tonnage"))
        assert summary.n_total == 500
        observed = ~np.isnan(counts)
        assert summary.n_treated == int((counts[observed] == 1).sum())
        assert summary.n_control == int((counts[observed] == 0).sum())

    def test_non_integral_count_rejected(self, make_dataset):
        ds = make_dataset(n=2, tonnage=[0.0, 1.5])
        with pytest.raises(DataError, match="integral"):
            assign_treatment(ds, TreatmentRule("exact_count", "tonnage"))


def test_negative_intervention_rejected(make_dataset):
    ds = make_dataset(n=2)
    frame = ds.frame.copy()
    frame["tonnage"] = [-1.0, 0.0]
    broken = TimeSeriesDataset(frame, ds.schema, validate=False)
    with pytest.raises(DataError, match="negative"):
        assign_treatment(broken, TreatmentRule("positive_measure", "tonnage"))


def test_unknown_mode_rejected():
    with pytest.raises(ConfigError):
        TreatmentRule("dose_response", "tonnage")


def test_synth_partition_property():
    ds, _ = generate(SynthConfig(n_units=2000, seed=3, two_vessel_rate=0.2))
    labeled, summary = assign_treatment(ds, TreatmentRule("exact_count", "cruise_count"))
    w = labeled.frame["treatment"]
    assert (w == 1).sum() + (w == 0).sum() + w.isna().sum() == 2000
    assert summary.n_excluded > 0  # two-vessel slots exist and are excluded


class TestExperimentDesign:
    def test_offsets_must_contain_zero(self):
        with pytest.raises(ConfigError):
            ExperimentDesign(TreatmentRule("positive_measure", "tonnage"), (1, 2), ("no2",))

    def test_offsets_must_be_contiguous(self):
        with pytest.raises(ConfigError):
            ExperimentDesign(TreatmentRule("positive_measure", "tonnage"), (-2, 0, 2), ("no2",))

    def test_valid_range(self):
        design = ExperimentDesign(
            TreatmentRule("positive_measure", "tonnage"), (-3, -2, -1, 0, 1, 2, 3), ("no2",)
        )
        assert design.offsets == (-3, -2, -1, 0, 1, 2, 3)
