"""Randomization inference on matched-pair outcome differences.

Point estimates, test-inversion (Fisherian) intervals for a constant unit
effect, Neyman conservative intervals for the average effect, and a
studentized variant of the inversion that stays asymptotically conservative
under heterogeneous effects.

The null distribution at a hypothesized constant effect tau assigns each
pair an adjusted difference of +/-|d_i - tau|: flipping which unit of a pair
is labeled treated flips the sign of the adjusted difference. Signs are
drawn with configurable positive probability so the same engine serves the
unbiased case (probability 1/2) and biased-assignment sensitivity bounds.
All draws share one sign matrix across the hypothesis grid (common random
numbers), which keeps the upper p-value function non-decreasing and the
lower one non-increasing for the mean-difference statistic.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd
from scipy.stats import norm, rankdata

from .errors import ConfigError, DataError, GridError
from .matching import MatchedPairSet

Statistic = Literal["mean_difference", "wilcoxon_signed_rank", "studentized"]

DEFAULT_GRID_HALF_WIDTH = 10.0
DEFAULT_GRID_STEP = 0.1
DEFAULT_DRAWS = 10_000
DEFAULT_EXACT_CUTOFF = 20

_GRID_CHUNK = 64  # fixed work decomposition so results never depend on threads
_EXACT_BLOCK = 1 << 14


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairDifferenceSeries:
    """Per-pair outcome differences (treated minus control) at one offset."""

    outcome: str
    offset: int
    values: np.ndarray
    n_pairs_total: int
    n_dropped_missing: int

    @property
    def n_pairs(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SharpNullGrid:
    """Arithmetic sequence of hypothesized constant effects, containing 0."""

    values: np.ndarray
    alpha: float = 0.05

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or len(v) < 2:
            raise ConfigError("grid needs at least two values")
        if not np.all(np.diff(v) > 0):
            raise ConfigError("grid values must be strictly increasing")
        if not np.any(v == 0.0):
            raise ConfigError("grid must contain 0")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")

    @property
    def step(self) -> float:
        return float(np.median(np.diff(self.values)))

    @classmethod
    def regular(
        cls,
        half_width: float = DEFAULT_GRID_HALF_WIDTH,
        step: float = DEFAULT_GRID_STEP,
        alpha: float = 0.05,
        low: float | None = None,
        high: float | None = None,
    ) -> "SharpNullGrid":
        lo = -half_width if low is None else low
        hi = half_width if high is None else high
        n_lo = math.floor(lo / step + 1e-9)
        n_hi = math.ceil(hi / step - 1e-9)
        n_lo, n_hi = min(n_lo, 0), max(n_hi, 0)
        values = np.round(np.arange(n_lo, n_hi + 1, dtype=float) * step, 12)
        return cls(values=values, alpha=alpha)


@dataclass(frozen=True)
class NeymanResult:
    estimate: float
    variance: float
    lower: float
    upper: float
    alpha: float


@dataclass(frozen=True)
class InversionResult:
    """One test-inversion run: interval endpoints plus full p-value functions."""

    statistic: str
    lower: float
    upper: float
    grid: np.ndarray
    p_upper: np.ndarray
    p_lower: np.ndarray
    alpha: float
    draws: int | None  # None when the null was enumerated exactly
    seed: int | None

    @property
    def exact(self) -> bool:
        return self.draws is None


@dataclass(frozen=True)
class IntervalReport:
    """Full inference for one outcome at one offset."""

    outcome: str
    offset: int
    n_pairs: int
    n_dropped_missing: int
    point_estimate: float
    fisherian: InversionResult
    neyman: NeymanResult
    studentized: InversionResult | None
    seed: int | None

    def to_dict(self) -> dict:
        def inv(r: InversionResult | None):
            if r is None:
                return None
            return {
                "statistic": r.statistic,
                "lower": r.lower,
                "upper": r.upper,
                "grid": r.grid.tolist(),
                "p_upper": r.p_upper.tolist(),
                "p_lower": r.p_lower.tolist(),
                "alpha": r.alpha,
                "draws": "exact" if r.exact else r.draws,
            }

        return {
            "outcome": self.outcome,
            "offset": self.offset,
            "n_pairs": self.n_pairs,
            "n_dropped_missing": self.n_dropped_missing,
            "point_estimate": self.point_estimate,
            "fisherian": inv(self.fisherian),
            "neyman": {
                "estimate": self.neyman.estimate,
                "variance": self.neyman.variance,
                "lower": self.neyman.lower,
                "upper": self.neyman.upper,
                "alpha": self.neyman.alpha,
            },
            "studentized": inv(self.studentized),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class InferenceSettings:
    grid: SharpNullGrid | None = None
    alpha: float = 0.05
    draws: int = DEFAULT_DRAWS
    exact_cutoff: int = DEFAULT_EXACT_CUTOFF
    seed: int | None = None
    statistic: str = "mean_difference"
    include_studentized: bool = True
    threads: int = 1


# ---------------------------------------------------------------------------
# Elementary estimators
# ---------------------------------------------------------------------------


def pair_differences(
    pairs: MatchedPairSet, outcome: str, offset: int = 0
) -> PairDifferenceSeries:
    """d_i = treated outcome minus control outcome at `offset` steps from t.

    Pairs missing either member's outcome at the offset are excluded and
    counted; an empty result is an error.
    """
    values = pairs.dataset.column(outcome).to_numpy(dtype=float)
    n = len(values)
    t_idx = pairs.treated_indices + offset
    c_idx = pairs.control_indices + offset
    in_range = (t_idx >= 0) & (t_idx < n) & (c_idx >= 0) & (c_idx < n)
    d = np.full(pairs.n_pairs, np.nan)
    d[in_range] = values[t_idx[in_range]] - values[c_idx[in_range]]
    ok = ~np.isnan(d)
    if not ok.any():
        raise DataError(
            f"no pair contributes an observed {outcome!r} difference at offset {offset}"
        )
    return PairDifferenceSeries(
        outcome=outcome,
        offset=offset,
        values=d[ok],
        n_pairs_total=pairs.n_pairs,
        n_dropped_missing=int((~ok).sum()),
    )


def point_estimate(d: np.ndarray | PairDifferenceSeries) -> float:
    """Average pair difference: the unbiased estimator of the constant effect."""
    values = d.values if isinstance(d, PairDifferenceSeries) else np.asarray(d, float)
    if len(values) == 0:
        raise DataError("cannot average an empty difference series")
    return float(np.mean(values))


def neyman(d: np.ndarray | PairDifferenceSeries, alpha: float = 0.05) -> NeymanResult:
    """Average-effect estimate with the conservative paired-variance interval.

    V = sum((d_i - mean)^2) / (I (I - 1)); the interval uses the Gaussian
    quantile (1.96 exactly at alpha = 0.05 for display parity).
    """
    values = d.values if isinstance(d, PairDifferenceSeries) else np.asarray(d, float)
    n = len(values)
    if n < 2:
        raise DataError("within-pair variance is not defined for fewer than 2 pairs")
    est = float(np.mean(values))
    var = float(np.sum((values - est) ** 2) / (n * (n - 1)))
    z = 1.96 if alpha == 0.05 else float(norm.ppf(1 - alpha / 2))
    half = z * math.sqrt(var)
    return NeymanResult(estimate=est, variance=var, lower=est - half, upper=est + half, alpha=alpha)


def wilcoxon_statistic(d: np.ndarray, tau: float = 0.0) -> float:
    """Signed-rank statistic of d - tau: sum of average-tie ranks of the
    positive adjusted differences, zeros dropped before ranking."""
    values = np.asarray(d, dtype=float)
    if len(values) == 0:
        raise DataError("empty difference vector")
    adj = values - tau
    nz = adj != 0
    if not nz.any():
        warnings.warn("all adjusted differences are zero: degenerate rank distribution")
        return 0.0
    ranks = rankdata(np.abs(adj[nz]))
    return float(ranks[adj[nz] > 0].sum())


# ---------------------------------------------------------------------------
# Test-inversion engine
# ---------------------------------------------------------------------------


def _rank_matrix(d: np.ndarray, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per grid column: tie-averaged ranks of |d - tau| (0 at dropped zeros)
    and the observed positive-rank sum."""
    n, g = len(d), len(grid)
    ranks = np.zeros((n, g))
    observed = np.zeros(g)
    for j in range(g):
        adj = d - grid[j]
        nz = adj != 0
        if not nz.any():
            continue
        r = rankdata(np.abs(adj[nz]))
        ranks[nz, j] = r
        observed[j] = r[adj[nz] > 0].sum()
    return ranks, observed


def _simulated_columns(
    statistic: str,
    signs: np.ndarray,
    abs_adj: np.ndarray,
    grid_chunk: np.ndarray,
    ranks_chunk: np.ndarray | None,
) -> np.ndarray:
    """Simulated statistic values, shape (n_assignments, len(grid_chunk))."""
    n_pairs = abs_adj.shape[0]
    if statistic == "wilcoxon_signed_rank":
        positives = (signs + 1.0) / 2.0
        return positives @ ranks_chunk
    sums = signs @ abs_adj
    means = sums / n_pairs
    if statistic == "mean_difference":
        return grid_chunk[None, :] + means
    # studentized: variance of the signed adjusted differences per assignment
    ssq = np.sum(abs_adj**2, axis=0)
    var = (ssq[None, :] - n_pairs * means**2) / (n_pairs * (n_pairs - 1))
    var = np.maximum(var, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = means / np.sqrt(var)
    out[np.isnan(out)] = 0.0  # 0/0: fully degenerate assignment
    return out


def _observed_columns(
    statistic: str,
    d: np.ndarray,
    grid: np.ndarray,
    wilcoxon_observed: np.ndarray | None,
) -> np.ndarray:
    n = len(d)
    tau_hat = float(np.mean(d))
    if statistic == "mean_difference":
        return np.full(len(grid), tau_hat)
    if statistic == "wilcoxon_signed_rank":
        return wilcoxon_observed
    var = float(np.sum((d - tau_hat) ** 2) / (n * (n - 1))) if n > 1 else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        obs = (tau_hat - grid) / math.sqrt(var) if var > 0 else np.sign(tau_hat - grid) * np.inf
    obs = np.asarray(obs, dtype=float)
    obs[np.isnan(obs)] = 0.0
    return obs


def invert_tests(
    d: np.ndarray,
    grid: SharpNullGrid,
    alpha: float | None = None,
    draws: int = DEFAULT_DRAWS,
    statistic: str = "mean_difference",
    seed: int | None = None,
    exact_cutoff: int = DEFAULT_EXACT_CUTOFF,
    threads: int = 1,
    positive_prob_upper: float = 0.5,
    positive_prob_lower: float = 0.5,
) -> InversionResult:
    """Scan the grid of sharp nulls and collect the non-rejected effects.

    For each hypothesized tau the sharp-null distribution of the statistic is
    simulated by assigning each pair the sign +1 with the given probability
    (1/2 unless a biased-assignment bound is requested): all 2^P assignments
    are enumerated with product-Bernoulli weights when P <= exact_cutoff,
    otherwise `draws` Monte Carlo assignments shared across the grid.
    p_upper(tau) is the proportion of simulated statistics at least the
    observed one, p_lower(tau) the proportion at most it; the interval reads
    the outermost grid values whose p exceeds alpha/2. Tail comparisons
    tolerate a 1e-9 relative slack so that algebraically exact ties (for
    example the all-positive sign assignment, whose mean statistic equals
    the observed mean whenever tau is below every d_i) survive floating
    point and still count as "at least as extreme".
    """
    values = np.asarray(d, dtype=float)
    if len(values) == 0:
        raise DataError("empty difference vector")
    if statistic not in ("mean_difference", "wilcoxon_signed_rank", "studentized"):
        raise ConfigError(f"unknown statistic {statistic!r}")
    if statistic == "studentized" and len(values) < 2:
        raise DataError("studentized statistic needs at least 2 pairs")
    alpha = grid.alpha if alpha is None else alpha
    tau_hat = float(np.mean(values))
    taus = grid.values
    n_pairs = len(values)

    if statistic in ("mean_difference", "studentized") and not (
        taus[0] <= tau_hat <= taus[-1]
    ):
        raise GridError(
            f"point estimate {tau_hat:.3f} lies outside the grid "
            f"[{taus[0]:.3f}, {taus[-1]:.3f}]; expand the grid"
        )
    if statistic == "wilcoxon_signed_rank" and np.all(values == values[0]):
        warnings.warn("all differences equal: degenerate signed-rank distribution")

    abs_adj = np.abs(values[:, None] - taus[None, :])
    ranks = observed_w = None
    if statistic == "wilcoxon_signed_rank":
        ranks, observed_w = _rank_matrix(values, taus)
    observed = _observed_columns(statistic, values, taus, observed_w)

    exact = n_pairs <= exact_cutoff
    same_prob = positive_prob_upper == positive_prob_lower

    finite_obs = np.where(np.isfinite(observed), observed, 0.0)
    tie_tol = 1e-9 * (1.0 + np.abs(finite_obs))  # per grid column

    p_upper = np.zeros(len(taus))
    p_lower = np.zeros(len(taus))

    if exact:
        total = 1 << n_pairs
        shifts = np.arange(n_pairs, dtype=np.uint64)
        for start in range(0, total, _EXACT_BLOCK):
            stop = min(start + _EXACT_BLOCK, total)
            codes = np.arange(start, stop, dtype=np.uint64)[:, None]
            bits = ((codes >> shifts) & 1).astype(np.float64)
            signs = 2.0 * bits - 1.0
            n_pos = bits.sum(axis=1)
            w_up = positive_prob_upper**n_pos * (1 - positive_prob_upper) ** (
                n_pairs - n_pos
            )
            w_lo = (
                w_up
                if same_prob
                else positive_prob_lower**n_pos
                * (1 - positive_prob_lower) ** (n_pairs - n_pos)
            )
            for j0 in range(0, len(taus), _GRID_CHUNK):
                j1 = min(j0 + _GRID_CHUNK, len(taus))
                sim = _simulated_columns(
                    statistic,
                    signs,
                    abs_adj[:, j0:j1],
                    taus[j0:j1],
                    None if ranks is None else ranks[:, j0:j1],
                )
                obs = observed[j0:j1][None, :]
                tol = tie_tol[j0:j1][None, :]
                p_upper[j0:j1] += w_up @ (sim >= obs - tol)
                p_lower[j0:j1] += w_lo @ (sim <= obs + tol)
        reported_draws = None
    else:
        rng = np.random.default_rng(seed)
        uniforms = rng.random((draws, n_pairs))
        signs_up = np.where(uniforms < positive_prob_upper, 1.0, -1.0)
        signs_lo = (
            signs_up
            if same_prob
            else np.where(uniforms < positive_prob_lower, 1.0, -1.0)
        )

        def run_chunk(j0: int) -> tuple[int, np.ndarray, np.ndarray]:
            j1 = min(j0 + _GRID_CHUNK, len(taus))
            rank_chunk = None if ranks is None else ranks[:, j0:j1]
            sim_up = _simulated_columns(
                statistic, signs_up, abs_adj[:, j0:j1], taus[j0:j1], rank_chunk
            )
            obs = observed[j0:j1][None, :]
            tol = tie_tol[j0:j1][None, :]
            up = (sim_up >= obs - tol).mean(axis=0)
            sim_lo = (
                sim_up
                if same_prob
                else _simulated_columns(
                    statistic, signs_lo, abs_adj[:, j0:j1], taus[j0:j1], rank_chunk
                )
            )
            lo = (sim_lo <= obs + tol).mean(axis=0)
            return j0, up, lo

        starts = list(range(0, len(taus), _GRID_CHUNK))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run_chunk, starts))
        else:
            results = [run_chunk(j0) for j0 in starts]
        for j0, up, lo in results:
            j1 = min(j0 + _GRID_CHUNK, len(taus))
            p_upper[j0:j1] = up
            p_lower[j0:j1] = lo
        reported_draws = draws

    # product-Bernoulli weights can drift past 1 by a few ulps
    np.clip(p_upper, 0.0, 1.0, out=p_upper)
    np.clip(p_lower, 0.0, 1.0, out=p_lower)

    if statistic == "mean_difference":
        # guaranteed by common random numbers: the simulated statistic is
        # non-decreasing in tau for every fixed sign assignment
        if not (
            np.all(np.diff(p_upper) >= -1e-12) and np.all(np.diff(p_lower) <= 1e-12)
        ):
            raise RuntimeError(
                "p-value functions lost monotonicity despite common random numbers"
            )

    in_up = p_upper > alpha / 2
    in_lo = p_lower > alpha / 2
    if not in_up.any() or not in_lo.any():
        raise GridError("no grid value survives test inversion; expand the grid")
    lower = float(taus[int(np.argmax(in_up))])
    upper = float(taus[len(taus) - 1 - int(np.argmax(in_lo[::-1]))])

    return InversionResult(
        statistic=statistic,
        lower=lower,
        upper=upper,
        grid=taus,
        p_upper=p_upper,
        p_lower=p_lower,
        alpha=alpha,
        draws=reported_draws,
        seed=seed,
    )


def _resolve_grid(
    d: np.ndarray, grid: SharpNullGrid | None, alpha: float
) -> SharpNullGrid:
    """Default grid, widened to hold the point estimate when it falls outside."""
    if grid is not None:
        return grid
    tau_hat = float(np.mean(d))
    if abs(tau_hat) <= DEFAULT_GRID_HALF_WIDTH:
        return SharpNullGrid.regular(alpha=alpha)
    if len(d) > 1:
        se = math.sqrt(float(np.sum((d - tau_hat) ** 2)) / (len(d) * (len(d) - 1)))
    else:
        se = abs(tau_hat) / 2
    margin = max(6 * se, 10 * DEFAULT_GRID_STEP)
    return SharpNullGrid.regular(
        alpha=alpha,
        low=min(-DEFAULT_GRID_HALF_WIDTH, tau_hat - margin),
        high=max(DEFAULT_GRID_HALF_WIDTH, tau_hat + margin),
    )


def fisherian_interval(
    d: np.ndarray | PairDifferenceSeries,
    grid: SharpNullGrid | None = None,
    alpha: float = 0.05,
    draws: int = DEFAULT_DRAWS,
    statistic: str = "mean_difference",
    seed: int | None = None,
    exact_cutoff: int = DEFAULT_EXACT_CUTOFF,
    threads: int = 1,
) -> InversionResult:
    """Interval of constant effects not rejected at level alpha."""
    values = d.values if isinstance(d, PairDifferenceSeries) else np.asarray(d, float)
    if statistic not in ("mean_difference", "wilcoxon_signed_rank"):
        raise ConfigError(f"unsupported Fisherian statistic {statistic!r}")
    resolved = _resolve_grid(values, grid, alpha)
    return invert_tests(
        values,
        resolved,
        alpha=alpha,
        draws=draws,
        statistic=statistic,
        seed=seed,
        exact_cutoff=exact_cutoff,
        threads=threads,
    )


def studentized_interval(
    d: np.ndarray | PairDifferenceSeries,
    grid: SharpNullGrid | None = None,
    alpha: float = 0.05,
    draws: int = DEFAULT_DRAWS,
    seed: int | None = None,
    exact_cutoff: int = DEFAULT_EXACT_CUTOFF,
    threads: int = 1,
) -> InversionResult:
    """Test inversion of (mean - tau) / sqrt(V), recomputing both the mean and
    the paired variance from the sign-flipped adjusted differences."""
    values = d.values if isinstance(d, PairDifferenceSeries) else np.asarray(d, float)
    resolved = _resolve_grid(values, grid, alpha)
    return invert_tests(
        values,
        resolved,
        alpha=alpha,
        draws=draws,
        statistic="studentized",
        seed=seed,
        exact_cutoff=exact_cutoff,
        threads=threads,
    )


def estimate_intervals(
    pairs: MatchedPairSet,
    outcome: str,
    offset: int = 0,
    settings: InferenceSettings = InferenceSettings(),
) -> IntervalReport:
    """Full per-outcome, per-offset report: point estimate, Fisherian and
    Neymanian intervals, and (optionally) the studentized inversion."""
    series = pair_differences(pairs, outcome, offset)
    values = series.values
    resolved = _resolve_grid(values, settings.grid, settings.alpha)
    fisher = invert_tests(
        values,
        resolved,
        alpha=settings.alpha,
        draws=settings.draws,
        statistic=settings.statistic,
        seed=settings.seed,
        exact_cutoff=settings.exact_cutoff,
        threads=settings.threads,
    )
    ney = neyman(values, settings.alpha)
    stud = None
    if settings.include_studentized and len(values) >= 2:
        stud = invert_tests(
            values,
            resolved,
            alpha=settings.alpha,
            draws=settings.draws,
            statistic="studentized",
            seed=settings.seed,
            exact_cutoff=settings.exact_cutoff,
            threads=settings.threads,
        )
    est = point_estimate(values)
    if settings.statistic == "mean_difference" and not (
        fisher.lower <= est <= fisher.upper
    ):
        raise RuntimeError("interval failed to bracket the point estimate")
    return IntervalReport(
        outcome=outcome,
        offset=offset,
        n_pairs=series.n_pairs,
        n_dropped_missing=series.n_dropped_missing,
        point_estimate=est,
        fisherian=fisher,
        neyman=ney,
        studentized=stud,
        seed=settings.seed,
    )


# ---------------------------------------------------------------------------
# Subgroup heterogeneity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubgroupResult:
    group_column: str
    reports: dict[str, IntervalReport]
    skipped: dict[str, int]  # group -> pair count when inference was impossible
    pair_table: pd.DataFrame


def subgroup_analysis(
    pairs: MatchedPairSet,
    outcome: str,
    offset: int,
    group_column: str,
    settings: InferenceSettings = InferenceSettings(),
) -> SubgroupResult:
    """Partition pairs by a covariate that is constant within each pair and run
    the full inference per group; also tabulates each pair's outcome
    difference against its intervention (e.g. tonnage) difference."""
    frame = pairs.dataset.frame
    col = pairs.dataset.column(group_column)
    g_treated = col.iloc[pairs.treated_indices].to_numpy()
    g_control = col.iloc[pairs.control_indices].to_numpy()
    mismatched = ~(
        (pd.isna(g_treated) & pd.isna(g_control)) | (g_treated == g_control)
    )
    if mismatched.any():
        raise DataError(
            f"grouping covariate {group_column!r} varies within "
            f"{int(mismatched.sum())} pair(s)"
        )

    outcome_vals = pairs.dataset.column(outcome).to_numpy(dtype=float)
    n = len(outcome_vals)
    t_idx, c_idx = pairs.treated_indices + offset, pairs.control_indices + offset
    ok = (t_idx >= 0) & (t_idx < n) & (c_idx >= 0) & (c_idx < n)
    diff = np.full(pairs.n_pairs, np.nan)
    diff[ok] = outcome_vals[t_idx[ok]] - outcome_vals[c_idx[ok]]

    if pairs.intervention_column and pairs.dataset.has_column(pairs.intervention_column):
        ivals = pairs.dataset.column(pairs.intervention_column).to_numpy(dtype=float)
        idiff = ivals[pairs.treated_indices] - ivals[pairs.control_indices]
    else:
        idiff = np.full(pairs.n_pairs, np.nan)

    ts = pairs.dataset.timestamps
    pair_table = pd.DataFrame(
        {
            "group": g_treated,
            "treated_timestamp": ts.iloc[pairs.treated_indices].to_numpy(),
            "control_timestamp": ts.iloc[pairs.control_indices].to_numpy(),
            "outcome_difference": diff,
            "intervention_difference": idiff,
        }
    )

    reports: dict[str, IntervalReport] = {}
    skipped: dict[str, int] = {}
    groups = pd.unique(pd.Series(g_treated).dropna())
    for value in groups:
        mask = g_treated == value
        subset = MatchedPairSet(
            dataset=pairs.dataset,
            pairs=pairs.pairs[mask],
            spec_hash=pairs.spec_hash,
            dataset_hash=pairs.dataset_hash,
            treatment_column=pairs.treatment_column,
            intervention_column=pairs.intervention_column,
        )
        if subset.n_pairs < 2:
            skipped[str(value)] = subset.n_pairs
            continue
        reports[str(value)] = estimate_intervals(subset, outcome, offset, settings)
    return SubgroupResult(
        group_column=group_column,
        reports=reports,
        skipped=skipped,
        pair_table=pair_table,
    )
