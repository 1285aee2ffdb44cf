"""Constrained pair matching: eligibility, candidate edges, maximum matching.

A treated unit may be paired with a control unit only when every constrained
covariate discrepancy is within its threshold (|x_t - x_c| <= delta, with
delta = 0 meaning exact equality) and the units are temporally close enough.
Candidate edges are generated by blocking on the exact-match key plus a
temporal sliding window, then a maximum-cardinality bipartite matching is
computed and refined so that total within-pair temporal distance is locally
minimal among maximum matchings. All steps are deterministic.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np
import pandas as pd

from .dataset import TimeSeriesDataset, lag_name
from .design import DEFAULT_TREATMENT_COLUMN
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class CovariateConstraint:
    """Per-covariate discrepancy bound; `lag` shifts the column before comparing."""

    column: str
    kind: Literal["exact", "caliper"]
    threshold: float = 0.0
    lag: int = 0

    def __post_init__(self) -> None:
        if self.kind == "caliper" and not self.threshold > 0:
            raise ConfigError(
                f"caliper on {self.column!r} needs a strictly positive threshold"
            )
        if self.kind == "exact" and self.threshold != 0:
            raise ConfigError(f"exact constraint on {self.column!r} must have threshold 0")
        if self.kind not in ("exact", "caliper"):
            raise ConfigError(f"unknown constraint kind {self.kind!r}")

    @property
    def resolved_column(self) -> str:
        return lag_name(self.column, self.lag)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "CovariateConstraint":
        return cls(
            column=raw["column"],
            kind=raw["kind"],
            threshold=float(raw.get("threshold", 0.0)),
            lag=int(raw.get("lag", 0)),
        )


@dataclass(frozen=True)
class MatchSpec:
    """Constraints plus temporal requirements defining pair eligibility."""

    constraints: tuple[CovariateConstraint, ...]
    max_distance_days: float
    same_month: bool = False
    min_separation_days: float | None = None
    min_across_pair_days: float | None = None

    def __post_init__(self) -> None:
        if not self.max_distance_days > 0:
            raise ConfigError("max temporal distance must be positive")
        if self.min_separation_days is not None and self.min_separation_days < 0:
            raise ConfigError("within-pair minimum separation must be nonnegative")

    @property
    def exact_constraints(self) -> tuple[CovariateConstraint, ...]:
        return tuple(c for c in self.constraints if c.kind == "exact")

    @property
    def caliper_constraints(self) -> tuple[CovariateConstraint, ...]:
        return tuple(c for c in self.constraints if c.kind == "caliper")

    def spec_hash(self) -> str:
        payload = json.dumps(
            {
                "constraints": [
                    [c.column, c.kind, c.threshold, c.lag] for c in self.constraints
                ],
                "max_distance_days": self.max_distance_days,
                "same_month": self.same_month,
                "min_separation_days": self.min_separation_days,
                "min_across_pair_days": self.min_across_pair_days,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw: Mapping) -> "MatchSpec":
        return cls(
            constraints=tuple(
                CovariateConstraint.from_dict(c) for c in raw.get("constraints", ())
            ),
            max_distance_days=float(raw["max_distance_days"]),
            same_month=bool(raw.get("same_month", False)),
            min_separation_days=raw.get("min_separation_days"),
            min_across_pair_days=raw.get("min_across_pair_days"),
        )


def required_lag_columns(spec: MatchSpec) -> dict[str, list[int]]:
    """Base column -> nonzero lag offsets the match spec needs materialized."""
    needed: dict[str, list[int]] = {}
    for c in spec.constraints:
        if c.lag != 0:
            needed.setdefault(c.column, [])
            if c.lag not in needed[c.column]:
                needed[c.column].append(c.lag)
    return needed


# ---------------------------------------------------------------------------
# Eligibility
# ---------------------------------------------------------------------------


def _is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and np.isnan(value)) or pd.isna(value)


def eligible(
    dataset: TimeSeriesDataset,
    treated_index: int,
    control_index: int,
    spec: MatchSpec,
) -> bool:
    """Reference predicate: may these two units form a pair under `spec`?

    A missing value on any constrained column makes the pair ineligible.
    This scalar form is the audit/oracle path; candidate generation uses the
    vectorized equivalent.
    """
    ts = dataset.timestamps
    t_time, c_time = ts.iloc[treated_index], ts.iloc[control_index]
    dist_days = abs((t_time - c_time).total_seconds()) / 86_400.0
    if dist_days > spec.max_distance_days:
        return False
    if spec.min_separation_days is not None and dist_days < spec.min_separation_days:
        return False
    if spec.same_month and t_time.month != c_time.month:
        return False
    frame = dataset.frame
    for c in spec.constraints:
        col = c.resolved_column
        if col not in frame.columns:
            raise DataError(f"constrained column {col!r} not present in dataset")
        a, b = frame[col].iloc[treated_index], frame[col].iloc[control_index]
        if _is_missing(a) or _is_missing(b):
            return False
        if c.kind == "exact":
            if a != b:
                return False
        elif abs(float(a) - float(b)) > c.threshold:
            return False
    return True


@dataclass(frozen=True)
class EdgeSet:
    """Bipartite candidate edges between treated and control unit indices."""

    edges: np.ndarray  # (n_edges, 2) int64, canonically sorted
    n_treated: int
    n_controls: int
    n_treated_missing: int
    n_controls_missing: int

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def candidate_edges(
    dataset: TimeSeriesDataset,
    spec: MatchSpec,
    treatment_column: str = DEFAULT_TREATMENT_COLUMN,
) -> EdgeSet:
    """Enumerate exactly the eligible (treated, control) pairs.

    Exact-match columns form a composite block key; within a block, controls
    are scanned through a sliding temporal window so eligibility is never
    evaluated outside the maximum temporal distance. Units missing any
    constrained value are dropped up front and tallied.
    """
    frame = dataset.frame
    if treatment_column not in frame.columns:
        raise DataError(f"treatment column {treatment_column!r} missing; assign treatment first")
    for c in spec.constraints:
        if c.resolved_column not in frame.columns:
            raise DataError(f"constrained column {c.resolved_column!r} not present in dataset")

    labels = frame[treatment_column]
    treated_all = np.flatnonzero((labels == 1).to_numpy(dtype=bool))
    control_all = np.flatnonzero((labels == 0).to_numpy(dtype=bool))

    cols = [c.resolved_column for c in spec.constraints]
    if cols:
        observed = ~frame[cols].isna().any(axis=1).to_numpy()
    else:
        observed = np.ones(len(frame), dtype=bool)
    treated = treated_all[observed[treated_all]]
    controls = control_all[observed[control_all]]
    n_treated_missing = len(treated_all) - len(treated)
    n_controls_missing = len(control_all) - len(controls)

    result_t: list[np.ndarray] = []
    result_c: list[np.ndarray] = []

    if len(treated) and len(controls):
        exact_cols = [c.resolved_column for c in spec.exact_constraints]
        keep = np.concatenate([treated, controls])
        if exact_cols:
            sub = frame.iloc[keep][exact_cols]
            codes, _ = pd.factorize(pd.MultiIndex.from_frame(sub), sort=True)
        else:
            codes = np.zeros(len(keep), dtype=np.int64)
        block_of = dict(zip(keep.tolist(), codes.tolist()))

        months = frame["timestamp"].dt.month.to_numpy()
        caliper_cols = spec.caliper_constraints
        caliper_values = {
            c.resolved_column: frame[c.resolved_column].to_numpy(dtype=float)
            for c in caliper_cols
        }

        steps_per_day = dataset.units_per_day
        max_steps = int(np.floor(spec.max_distance_days * steps_per_day + 1e-9))
        min_steps = (
            int(np.ceil(spec.min_separation_days * steps_per_day - 1e-9))
            if spec.min_separation_days is not None
            else 0
        )

        controls_by_block: dict[int, np.ndarray] = {}
        ctrl_codes = np.array([block_of[c] for c in controls.tolist()])
        order = np.lexsort((controls, ctrl_codes))
        sorted_controls = controls[order]
        sorted_codes = ctrl_codes[order]
        bounds = np.flatnonzero(np.diff(sorted_codes)) + 1
        for chunk, code in zip(
            np.split(sorted_controls, bounds), np.split(sorted_codes, bounds)
        ):
            if len(code):
                controls_by_block[int(code[0])] = chunk

        for t in treated.tolist():
            block = controls_by_block.get(block_of[t])
            if block is None:
                continue
            lo = np.searchsorted(block, t - max_steps, side="left")
            hi = np.searchsorted(block, t + max_steps, side="right")
            cand = block[lo:hi]
            if min_steps:
                cand = cand[np.abs(cand - t) >= min_steps]
            if spec.same_month and len(cand):
                cand = cand[months[cand] == months[t]]
            for c in caliper_cols:
                if not len(cand):
                    break
                vals = caliper_values[c.resolved_column]
                cand = cand[np.abs(vals[cand] - vals[t]) <= c.threshold]
            if len(cand):
                result_t.append(np.full(len(cand), t, dtype=np.int64))
                result_c.append(cand.astype(np.int64))

    if result_t:
        edges = np.column_stack([np.concatenate(result_t), np.concatenate(result_c)])
        edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    else:
        edges = np.empty((0, 2), dtype=np.int64)

    return EdgeSet(
        edges=edges,
        n_treated=len(treated_all),
        n_controls=len(control_all),
        n_treated_missing=int(n_treated_missing),
        n_controls_missing=int(n_controls_missing),
    )


# ---------------------------------------------------------------------------
# Maximum bipartite matching (Hopcroft-Karp) with distance refinement
# ---------------------------------------------------------------------------

_INF = float("inf")


def _hopcroft_karp(adjacency: dict[int, list[int]]) -> dict[int, int]:
    """Maximum-cardinality matching of the bipartite graph left -> rights.

    Deterministic: vertices are visited in sorted order and adjacency lists
    must already be sorted. The augmenting DFS is iterative so path length is
    not bounded by the interpreter recursion limit.
    """
    pair_left: dict[int, int] = {}
    pair_right: dict[int, int] = {}
    lefts = sorted(adjacency)
    dist: dict[int, float] = {}

    def bfs() -> float:
        queue: deque[int] = deque()
        for left in lefts:
            if left not in pair_left:
                dist[left] = 0
                queue.append(left)
            else:
                dist[left] = _INF
        target = _INF
        while queue:
            left = queue.popleft()
            if dist[left] >= target:
                continue
            for right in adjacency[left]:
                other = pair_right.get(right)
                if other is None:
                    target = min(target, dist[left] + 1)
                elif dist[other] == _INF:
                    dist[other] = dist[left] + 1
                    queue.append(other)
        return target

    def augment(root: int, target: float) -> bool:
        stack = [root]
        iters = {root: iter(adjacency[root])}
        via: dict[int, int] = {}
        while stack:
            left = stack[-1]
            descended = False
            for right in iters[left]:
                other = pair_right.get(right)
                if other is None:
                    if dist[left] + 1 == target:
                        # free right found: flip matched/unmatched along the path
                        cur_left, cur_right = left, right
                        while True:
                            pair_left[cur_left] = cur_right
                            pair_right[cur_right] = cur_left
                            stack.pop()
                            if not stack:
                                return True
                            cur_left = stack[-1]
                            cur_right = via[cur_left]
                elif dist[other] == dist[left] + 1 and other not in iters:
                    via[left] = right
                    stack.append(other)
                    iters[other] = iter(adjacency[other])
                    descended = True
                    break
            if not descended:
                dist[left] = _INF
                stack.pop()
        return False

    while True:
        target = bfs()
        if target == _INF:
            break
        for left in lefts:
            if left not in pair_left:
                augment(left, target)
    return pair_left


def _refine_distances(
    pair_left: dict[int, int],
    adjacency: dict[int, list[int]],
    edge_set: set[tuple[int, int]],
    window_steps: int | None = None,
) -> dict[int, int]:
    """Reduce total |treated - control| while preserving cardinality.

    Two deterministic moves are applied until a fixed point: reassigning a
    treated unit to a closer unmatched control, and swapping the controls of
    two pairs when that strictly lowers the summed distance. Each move
    strictly decreases an integer total, so the loop terminates.
    `window_steps` bounds the edge span and lets the swap scan skip pair
    combinations that cannot share cross edges.
    """
    matched_rights = set(pair_left.values())
    changed = True
    while changed:
        changed = False
        # move 1: pull a pair onto a strictly closer unmatched control
        for left in sorted(pair_left):
            current = pair_left[left]
            best = current
            best_dist = abs(left - current)
            for right in adjacency[left]:
                if right in matched_rights and right != current:
                    continue
                d = abs(left - right)
                if d < best_dist:
                    best, best_dist = right, d
            if best != current:
                matched_rights.discard(current)
                matched_rights.add(best)
                pair_left[left] = best
                changed = True
        # move 2: swap controls between two pairs when both cross edges exist
        lefts = sorted(pair_left)
        for i, a in enumerate(lefts):
            for b in lefts[i + 1 :]:
                if window_steps is not None and b - a > 2 * window_steps:
                    break
                ca, cb = pair_left[a], pair_left[b]
                if (a, cb) not in edge_set or (b, ca) not in edge_set:
                    continue
                if abs(a - cb) + abs(b - ca) < abs(a - ca) + abs(b - cb):
                    pair_left[a], pair_left[b] = cb, ca
                    changed = True
    return pair_left


@dataclass
class MatchedPairSet:
    """Disjoint treated/control pairs with provenance over one dataset."""

    dataset: TimeSeriesDataset
    pairs: np.ndarray  # (n_pairs, 2) int64: [treated index, control index]
    spec_hash: str = ""
    dataset_hash: str = ""
    treatment_column: str = DEFAULT_TREATMENT_COLUMN
    intervention_column: str | None = None

    def __post_init__(self) -> None:
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        treated, controls = self.pairs[:, 0], self.pairs[:, 1]
        if len(np.unique(treated)) != len(treated) or len(np.unique(controls)) != len(controls):
            raise DataError("pair set is not one-to-one")

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def treated_indices(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def control_indices(self) -> np.ndarray:
        return self.pairs[:, 1]

    def temporal_distances_days(self) -> np.ndarray:
        ts = self.dataset.timestamps.to_numpy()
        deltas = ts[self.pairs[:, 0]] - ts[self.pairs[:, 1]]
        return np.abs(deltas.astype("timedelta64[s]").astype(np.int64)) / 86_400.0

    def audit(self, spec: MatchSpec) -> None:
        """Re-check every emitted pair against the eligibility predicate."""
        for t, c in self.pairs.tolist():
            if not eligible(self.dataset, t, c, spec):
                raise DataError(f"pair ({t}, {c}) fails post-hoc eligibility audit")

    def to_frame(self) -> pd.DataFrame:
        ts = self.dataset.timestamps
        return pd.DataFrame(
            {
                "treated_timestamp": ts.iloc[self.pairs[:, 0]].dt.strftime(
                    "%Y-%m-%dT%H:%M:%S"
                ).to_numpy(),
                "control_timestamp": ts.iloc[self.pairs[:, 1]].dt.strftime(
                    "%Y-%m-%dT%H:%M:%S"
                ).to_numpy(),
                "temporal_distance": self.temporal_distances_days(),
            }
        )

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(
        cls,
        path,
        dataset: TimeSeriesDataset,
        treatment_column: str = DEFAULT_TREATMENT_COLUMN,
        intervention_column: str | None = None,
    ) -> "MatchedPairSet":
        table = pd.read_csv(path)
        lookup = {ts: t for t, ts in enumerate(dataset.timestamps)}
        try:
            pairs = np.array(
                [
                    [lookup[pd.Timestamp(a)], lookup[pd.Timestamp(b)]]
                    for a, b in zip(table["treated_timestamp"], table["control_timestamp"])
                ],
                dtype=np.int64,
            ).reshape(-1, 2)
        except KeyError as exc:
            raise DataError(f"pair timestamp {exc} not found in dataset") from exc
        return cls(
            dataset=dataset,
            pairs=pairs,
            dataset_hash=dataset.content_hash(),
            treatment_column=treatment_column,
            intervention_column=intervention_column,
        )


def maximum_matching(
    dataset: TimeSeriesDataset,
    edge_set: EdgeSet,
    spec: MatchSpec | None = None,
    intervention_column: str | None = None,
    treatment_column: str = DEFAULT_TREATMENT_COLUMN,
) -> MatchedPairSet:
    """Maximum-cardinality one-to-one pairing over the candidate edges.

    Among maximum matchings the total within-pair temporal distance is
    locally minimized by a deterministic swap descent; identical inputs give
    identical pair sets.
    """
    adjacency: dict[int, list[int]] = {}
    for t, c in edge_set.edges.tolist():
        adjacency.setdefault(t, []).append(c)
    for rights in adjacency.values():
        rights.sort()

    pair_left = _hopcroft_karp(adjacency)
    if pair_left:
        pairs_set = {(t, c) for t, c in edge_set.edges.tolist()}
        window = None
        if spec is not None:
            window = int(
                np.floor(spec.max_distance_days * dataset.units_per_day + 1e-9)
            )
        pair_left = _refine_distances(pair_left, adjacency, pairs_set, window)

    pairs = np.array(sorted(pair_left.items()), dtype=np.int64).reshape(-1, 2)
    matched = MatchedPairSet(
        dataset=dataset,
        pairs=pairs,
        spec_hash=spec.spec_hash() if spec is not None else "",
        dataset_hash=dataset.content_hash(),
        treatment_column=treatment_column,
        intervention_column=intervention_column,
    )
    if spec is not None and spec.min_across_pair_days is not None:
        matched = _enforce_across_pair_separation(matched, spec.min_across_pair_days)
    return matched


def _enforce_across_pair_separation(
    matched: MatchedPairSet, min_days: float
) -> MatchedPairSet:
    """Greedily drop pairs until no treated unit sits within `min_days` of a
    control from a different pair. Deterministic: the pair involved in the
    most violations goes first, ties broken by larger within-pair distance
    then later treated index."""
    pairs = matched.pairs.copy()
    ts = matched.dataset.timestamps.to_numpy().astype("datetime64[s]").astype(np.int64)
    while len(pairs) > 1:
        t_times = ts[pairs[:, 0]]
        c_times = ts[pairs[:, 1]]
        gap = np.abs(t_times[:, None] - c_times[None, :]) / 86_400.0
        np.fill_diagonal(gap, np.inf)
        violations = (gap < min_days).sum(axis=1) + (gap < min_days).sum(axis=0)
        if not violations.any():
            break
        within = np.abs(t_times - c_times)
        order = np.lexsort((pairs[:, 0], within, violations))
        pairs = np.delete(pairs, order[-1], axis=0)
    return MatchedPairSet(
        dataset=matched.dataset,
        pairs=pairs,
        spec_hash=matched.spec_hash,
        dataset_hash=matched.dataset_hash,
        treatment_column=matched.treatment_column,
        intervention_column=matched.intervention_column,
    )


def match_pairs(
    dataset: TimeSeriesDataset,
    spec: MatchSpec,
    treatment_column: str = DEFAULT_TREATMENT_COLUMN,
    intervention_column: str | None = None,
) -> tuple[MatchedPairSet, EdgeSet]:
    """Candidate generation followed by maximum matching."""
    edges = candidate_edges(dataset, spec, treatment_column)
    matched = maximum_matching(
        dataset, edges, spec, intervention_column, treatment_column
    )
    return matched, edges


# ---------------------------------------------------------------------------
# Diagnostics on a matched pair set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpilloverReport:
    """Per-treated-unit minimum distance to controls in other pairs."""

    treated_timestamps: tuple[str, ...]
    min_distance_days: np.ndarray  # per treated unit, np.inf when no other pair
    horizons_days: tuple[float, ...]
    fractions: tuple[float, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"horizon_days": self.horizons_days, "fraction_within": self.fractions}
        )

    def units_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "treated_timestamp": self.treated_timestamps,
                "min_cross_pair_distance_days": self.min_distance_days,
            }
        )


def spillover_report(
    pairs: MatchedPairSet, horizons_days: Sequence[float]
) -> SpilloverReport:
    """Fraction of treated units with an out-of-pair control within each horizon."""
    if pairs.n_pairs == 0:
        raise DataError("spillover report needs a nonempty pair set")
    ts = pairs.dataset.timestamps.to_numpy().astype("datetime64[s]").astype(np.int64)
    t_times = ts[pairs.treated_indices].astype(float)
    c_times = ts[pairs.control_indices].astype(float)
    if pairs.n_pairs == 1:
        minima = np.array([np.inf])
    else:
        gap = np.abs(t_times[:, None] - c_times[None, :]) / 86_400.0
        np.fill_diagonal(gap, np.inf)
        minima = gap.min(axis=1)
    fractions = tuple(float(np.mean(minima <= h)) for h in horizons_days)
    stamps = tuple(
        pairs.dataset.timestamps.iloc[pairs.treated_indices]
        .dt.strftime("%Y-%m-%dT%H:%M:%S")
        .tolist()
    )
    return SpilloverReport(
        treated_timestamps=stamps,
        min_distance_days=minima,
        horizons_days=tuple(float(h) for h in horizons_days),
        fractions=fractions,
    )


@dataclass(frozen=True)
class CompleteCaseReport:
    n_before: int
    n_after: int

    @property
    def fraction_dropped(self) -> float:
        if self.n_before == 0:
            return 0.0
        return 1.0 - self.n_after / self.n_before


def complete_case_filter(
    pairs: MatchedPairSet,
    outcome: str,
    offsets: Iterable[int],
) -> tuple[MatchedPairSet, CompleteCaseReport]:
    """Keep only pairs whose members both have observed outcomes at all offsets.

    A value counts as observed when it is non-missing and not flagged by an
    `<outcome>__imputed` companion column.
    """
    frame = pairs.dataset.frame
    values = pairs.dataset.column(outcome).to_numpy(dtype=float)
    observed = ~np.isnan(values)
    flag_col = f"{outcome}__imputed"
    if flag_col in frame.columns:
        observed &= frame[flag_col].to_numpy(dtype=float) == 0

    n = len(values)
    keep = np.ones(pairs.n_pairs, dtype=bool)
    for off in offsets:
        for col in (pairs.treated_indices, pairs.control_indices):
            shifted = col + off
            in_range = (shifted >= 0) & (shifted < n)
            ok = np.zeros(pairs.n_pairs, dtype=bool)
            ok[in_range] = observed[shifted[in_range]]
            keep &= ok

    filtered = MatchedPairSet(
        dataset=pairs.dataset,
        pairs=pairs.pairs[keep],
        spec_hash=pairs.spec_hash,
        dataset_hash=pairs.dataset_hash,
        treatment_column=pairs.treatment_column,
        intervention_column=pairs.intervention_column,
    )
    return filtered, CompleteCaseReport(n_before=pairs.n_pairs, n_after=filtered.n_pairs)
