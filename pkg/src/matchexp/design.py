"""Binary treatment definitions over raw intervention measures.

Two rules are supported: `positive_measure` treats any unit with a strictly
positive intervention measure (e.g. docked gross tonnage) and controls units
at exactly zero; `exact_count` treats units whose event count equals one,
controls units at zero, and excludes everything else (counts of two or more
are neither treated nor control).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd

from .dataset import TimeSeriesDataset
from .errors import ConfigError, DataError

TreatmentMode = Literal["positive_measure", "exact_count"]

#: Label column values: 1 treated, 0 control, <NA> excluded.
DEFAULT_TREATMENT_COLUMN = "treatment"


@dataclass(frozen=True)
class TreatmentRule:
    """How an intervention column maps to treated / control / excluded."""

    mode: TreatmentMode
    column: str

    def __post_init__(self) -> None:
        if self.mode not in ("positive_measure", "exact_count"):
            raise ConfigError(f"unknown treatment mode {self.mode!r}")

    @classmethod
    def from_dict(cls, raw) -> "TreatmentRule":
        try:
            return cls(mode=raw["mode"], column=raw["column"])
        except KeyError as exc:
            raise ConfigError(f"treatment rule lacks key {exc}") from exc


@dataclass(frozen=True)
class ExperimentDesign:
    """A treatment rule plus the lag/lead offsets and outcomes to analyze."""

    rule: TreatmentRule
    offsets: tuple[int, ...]
    outcomes: tuple[str, ...]

    def __post_init__(self) -> None:
        offs = self.offsets
        if not offs or 0 not in offs:
            raise ConfigError("analysis offsets must contain 0")
        if list(offs) != list(range(min(offs), max(offs) + 1)):
            raise ConfigError("analysis offsets must form a contiguous range")


@dataclass(frozen=True)
class TreatmentSummary:
    n_treated: int
    n_control: int
    n_excluded: int
    n_missing_intervention: int

    @property
    def n_total(self) -> int:
        return self.n_treated + self.n_control + self.n_excluded


def assign_treatment(
    dataset: TimeSeriesDataset,
    rule: TreatmentRule,
    column: str = DEFAULT_TREATMENT_COLUMN,
) -> tuple[TimeSeriesDataset, TreatmentSummary]:
    """Label every unit treated (1), control (0), or excluded (<NA>).

    Units with a missing intervention measure are excluded. Under
    `exact_count` the measure must be integral where observed, and units
    with counts of two or more are excluded by definition of the rule.
    """
    values = dataset.column(rule.column)
    if not pd.api.types.is_numeric_dtype(values):
        raise DataError(f"intervention column {rule.column!r} is not numeric")
    arr = values.to_numpy(dtype=float)
    if np.nanmin(arr, initial=0.0) < 0:
        raise DataError(f"negative intervention value in {rule.column!r}")

    observed = ~np.isnan(arr)
    labels = pd.array(np.zeros(len(arr), dtype=np.int8), dtype="Int8")
    labels[:] = pd.NA  # excluded unless a branch below claims the unit

    if rule.mode == "positive_measure":
        labels[observed & (arr > 0)] = 1
        labels[observed & (arr == 0)] = 0
    else:
        rounded = np.round(arr[observed])
        if not np.allclose(arr[observed], rounded):
            raise DataError(f"exact_count rule requires integral {rule.column!r}")
        counts = np.full(len(arr), -1.0)
        counts[observed] = rounded
        labels[counts == 1] = 1
        labels[counts == 0] = 0

    summary = TreatmentSummary(
        n_treated=int((labels == 1).sum()),
        n_control=int((labels == 0).sum()),
        n_excluded=int(labels.isna().sum()),
        n_missing_intervention=int((~observed).sum()),
    )
    return dataset.with_columns({column: labels}), summary
