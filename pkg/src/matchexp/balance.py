"""Covariate balance diagnostics and the as-if-randomization check.

Balance is summarized per covariate as the absolute standardized mean
difference (continuous) or the absolute difference in category proportions
(categorical), before and after matching. Both stages standardize by the
pre-match pooled standard deviation so the numbers are comparable on one
scale. The randomization check permutes the treated/control labels within
pairs and compares the observed Mahalanobis distance of the mean pair
difference against the permutation null.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .dataset import TimeSeriesDataset
from .design import DEFAULT_TREATMENT_COLUMN
from .errors import DataError
from .matching import MatchedPairSet


@dataclass(frozen=True)
class BalanceEntry:
    covariate: str
    category: str | None  # None for continuous covariates
    stage: str  # "before" | "after"
    statistic: float | None
    degenerate: bool = False


@dataclass(frozen=True)
class BalanceReport:
    entries: tuple[BalanceEntry, ...]

    def to_frame(self) -> pd.DataFrame:
        """Tidy (covariate, stage, statistic) table for love-plot rendering."""
        rows = []
        for e in self.entries:
            name = e.covariate if e.category is None else f"{e.covariate}={e.category}"
            rows.append(
                {
                    "covariate": name,
                    "stage": e.stage,
                    "statistic": np.nan if e.statistic is None else e.statistic,
                    "degenerate": e.degenerate,
                }
            )
        return pd.DataFrame(rows)


def _smd_entries(
    name: str,
    values: np.ndarray,
    before_t: np.ndarray,
    before_c: np.ndarray,
    after_t: np.ndarray,
    after_c: np.ndarray,
) -> list[BalanceEntry]:
    def group_stats(idx: np.ndarray) -> tuple[float, float]:
        v = values[idx]
        v = v[~np.isnan(v)]
        if len(v) == 0:
            return np.nan, np.nan
        return float(np.mean(v)), float(np.var(v, ddof=1)) if len(v) > 1 else 0.0

    mean_t, var_t = group_stats(before_t)
    mean_c, var_c = group_stats(before_c)
    pooled_sd = float(np.sqrt((var_t + var_c) / 2.0))
    entries = []
    for stage, ti, ci in (("before", before_t, before_c), ("after", after_t, after_c)):
        m_t, _ = group_stats(ti)
        m_c, _ = group_stats(ci)
        if pooled_sd == 0 or np.isnan(pooled_sd):
            entries.append(BalanceEntry(name, None, stage, None, degenerate=True))
        else:
            entries.append(
                BalanceEntry(name, None, stage, abs(m_t - m_c) / pooled_sd)
            )
    return entries


def _proportion_entries(
    name: str,
    values: pd.Series,
    before_t: np.ndarray,
    before_c: np.ndarray,
    after_t: np.ndarray,
    after_c: np.ndarray,
) -> list[BalanceEntry]:
    categories = pd.unique(values.dropna())
    entries = []
    for cat in categories:
        hits = (values == cat).to_numpy()
        observed = values.notna().to_numpy()
        for stage, ti, ci in (
            ("before", before_t, before_c),
            ("after", after_t, after_c),
        ):
            def prop(idx: np.ndarray) -> float:
                obs = idx[observed[idx]]
                return float(np.mean(hits[obs])) if len(obs) else np.nan
            entries.append(
                BalanceEntry(name, str(cat), stage, abs(prop(ti) - prop(ci)))
            )
    return entries


def balance_report(
    dataset: TimeSeriesDataset,
    pairs: MatchedPairSet,
    covariates: Sequence[str],
    treatment_column: str = DEFAULT_TREATMENT_COLUMN,
) -> BalanceReport:
    """Before/after matching balance for the given covariates.

    Before-matching statistics compare all treated to all control units;
    after-matching statistics use the matched units only. A covariate with
    zero pre-match pooled standard deviation is reported as degenerate.
    """
    labels = dataset.column(treatment_column)
    before_t = np.flatnonzero((labels == 1).to_numpy(dtype=bool))
    before_c = np.flatnonzero((labels == 0).to_numpy(dtype=bool))
    after_t = pairs.treated_indices
    after_c = pairs.control_indices

    entries: list[BalanceEntry] = []
    for name in covariates:
        col = dataset.column(name)
        if dataset.schema.kind_of(name) == "categorical" or (
            not pd.api.types.is_numeric_dtype(col)
        ):
            entries.extend(
                _proportion_entries(name, col, before_t, before_c, after_t, after_c)
            )
        else:
            entries.extend(
                _smd_entries(
                    name,
                    col.to_numpy(dtype=float),
                    before_t,
                    before_c,
                    after_t,
                    after_c,
                )
            )
    return BalanceReport(entries=tuple(entries))


@dataclass(frozen=True)
class RandomizationCheckResult:
    observed: float
    null_sample: np.ndarray
    p_value: float
    covariance_rank: int
    n_pairs_used: int
    n_dropped_missing: int


def _mahalanobis(diffs: np.ndarray) -> tuple[float, int]:
    """Distance of the mean pair-difference vector under S = cov(diffs)/I."""
    n, k = diffs.shape
    mean = diffs.mean(axis=0)
    cov = np.cov(diffs, rowvar=False, ddof=1).reshape(k, k) / n
    pinv = np.linalg.pinv(cov)
    rank = int(np.linalg.matrix_rank(cov))
    return float(mean @ pinv @ mean), rank


def randomization_check(
    pairs: MatchedPairSet,
    covariates: Sequence[str],
    n_perm: int = 1000,
    seed: int | None = None,
) -> RandomizationCheckResult:
    """Permutation test of whether treatment looks randomized within pairs.

    The statistic is the Mahalanobis distance of the mean within-pair
    covariate difference (pseudo-inverse covariance, so exactly matched
    covariates with zero-variance differences are tolerated); the null
    swaps each pair's labels independently with probability 1/2. The tail
    comparison tolerates a 1e-9 relative slack so the identity permutation
    (whose statistic equals the observed one exactly in real arithmetic)
    counts as at least as extreme despite floating point.
    """
    if pairs.n_pairs < 2:
        raise DataError("randomization check needs at least 2 pairs")
    frame = pairs.dataset.frame
    cols = []
    for name in covariates:
        col = pairs.dataset.column(name)
        if not pd.api.types.is_numeric_dtype(col):
            raise DataError(f"randomization check requires numeric covariates ({name!r})")
        cols.append(col.to_numpy(dtype=float))
    X = np.column_stack(cols)
    diffs = X[pairs.treated_indices] - X[pairs.control_indices]
    ok = ~np.isnan(diffs).any(axis=1)
    n_dropped = int((~ok).sum())
    diffs = diffs[ok]
    if len(diffs) < 2:
        raise DataError("fewer than 2 pairs with fully observed covariates")

    observed, rank = _mahalanobis(diffs)

    rng = np.random.default_rng(seed)
    n, k = diffs.shape
    signs = np.where(rng.random((n_perm, n)) < 0.5, 1.0, -1.0)
    flipped = signs[:, :, None] * diffs[None, :, :]
    means = flipped.mean(axis=1)
    centered = flipped - means[:, None, :]
    covs = np.einsum("pik,pil->pkl", centered, centered) / (n - 1) / n
    pinvs = np.linalg.pinv(covs)
    null = np.einsum("pk,pkl,pl->p", means, pinvs, means)

    p_value = float(np.mean(null >= observed - 1e-9 * (1.0 + abs(observed))))
    return RandomizationCheckResult(
        observed=observed,
        null_sample=null,
        p_value=p_value,
        covariance_rank=rank,
        n_pairs_used=n,
        n_dropped_missing=n_dropped,
    )
