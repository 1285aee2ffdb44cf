"""Time series ingestion, validation, and lagged/lead column views.

A dataset is an ordered sequence of units (hours or days) on a uniform
timestamp grid. Missingness is an explicit state (NaN / None cells, or whole
units inserted to fill grid gaps), never a sentinel number. Datasets are
immutable after construction: every transformation returns a new instance.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Literal, Mapping

import numpy as np
import pandas as pd

from .errors import DataError, SchemaError

Granularity = Literal["hourly", "daily"]
ColumnKind = Literal["numeric", "categorical"]

_STEPS: dict[str, pd.Timedelta] = {
    "hourly": pd.Timedelta(hours=1),
    "daily": pd.Timedelta(days=1),
}

#: Calendar columns that can be derived from timestamps plus a calendar table.
CALENDAR_COLUMNS = ("hour", "weekday", "month", "year", "bank_day", "holiday")


def lag_name(column: str, offset: int) -> str:
    """Derived column name for `column` shifted by `offset` steps.

    Negative offsets are lags, positive offsets are leads; offset 0 maps to
    the base column name itself.
    """
    if offset == 0:
        return column
    return f"{column}@{offset:+d}"


@dataclass(frozen=True)
class LagView:
    """A derived column whose value at index t equals the base column at t+offset."""

    base: str
    offset: int

    @property
    def derived(self) -> str:
        return lag_name(self.base, self.offset)


@dataclass(frozen=True)
class Schema:
    """Declared columns of a dataset.

    covariates maps name -> "numeric" | "categorical"; outcomes maps
    name -> unit string (concentrations are reported in ug/m3);
    interventions are nonnegative numeric measures (tonnage, vessel counts).
    """

    granularity: Granularity
    covariates: Mapping[str, ColumnKind] = field(default_factory=dict)
    outcomes: Mapping[str, str] = field(default_factory=dict)
    interventions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.granularity not in _STEPS:
            raise SchemaError(f"unknown granularity {self.granularity!r}")
        for name, kind in self.covariates.items():
            if kind not in ("numeric", "categorical"):
                raise SchemaError(f"covariate {name!r} has unknown kind {kind!r}")
        overlap = (
            set(self.covariates) & set(self.outcomes)
            | set(self.covariates) & set(self.interventions)
            | set(self.outcomes) & set(self.interventions)
        )
        if overlap:
            raise SchemaError(f"columns declared with more than one role: {sorted(overlap)}")

    @property
    def step(self) -> pd.Timedelta:
        return _STEPS[self.granularity]

    @property
    def columns(self) -> list[str]:
        return list(self.covariates) + list(self.outcomes) + list(self.interventions)

    def kind_of(self, column: str) -> ColumnKind:
        if column in self.covariates:
            return self.covariates[column]
        return "numeric"

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Schema":
        return cls(
            granularity=raw["granularity"],
            covariates=dict(raw.get("covariates", {})),
            outcomes=dict(raw.get("outcomes", {})),
            interventions=tuple(raw.get("interventions", ())),
        )


@dataclass(frozen=True)
class CalendarTable:
    """Jurisdiction-specific calendar facts used to derive calendar covariates.

    bank_days are single public-holiday dates; holidays are inclusive
    (start, end) vacation-period date ranges.
    """

    bank_days: frozenset[date] = frozenset()
    holidays: tuple[tuple[date, date], ...] = ()

    @classmethod
    def from_dict(cls, raw: Mapping) -> "CalendarTable":
        bank = frozenset(date.fromisoformat(d) for d in raw.get("bank_days", ()))
        ranges = tuple(
            (date.fromisoformat(a), date.fromisoformat(b))
            for a, b in raw.get("holidays", ())
        )
        for a, b in ranges:
            if b < a:
                raise SchemaError(f"holiday range {a}..{b} ends before it starts")
        return cls(bank_days=bank, holidays=ranges)

    def is_holiday(self, d: date) -> bool:
        return any(a <= d <= b for a, b in self.holidays)


@dataclass(frozen=True)
class Unit:
    """Row view of one hour or day."""

    index: int
    timestamp: pd.Timestamp
    covariates: dict
    outcomes: dict
    interventions: dict


@dataclass(frozen=True)
class GapReport:
    n_expected: int
    n_present: int
    n_inserted: int
    gaps: tuple[tuple[pd.Timestamp, pd.Timestamp], ...]


@dataclass(frozen=True)
class IngestReport:
    n_rows_read: int
    n_units: int
    missing_cells: dict[str, int]
    gap_report: GapReport


class TimeSeriesDataset:
    """Immutable ordered units with covariates, outcomes, and interventions.

    The underlying frame is indexed by unit position t = 0..T-1 and carries a
    `timestamp` column on a uniform grid matching the schema granularity.
    Extra columns (derived lags, calendar indicators, treatment labels) are
    tracked alongside the declared schema columns.
    """

    def __init__(
        self,
        frame: pd.DataFrame,
        schema: Schema,
        lag_views: Mapping[str, LagView] | None = None,
        validate: bool = True,
    ) -> None:
        self.schema = schema
        self.lag_views: dict[str, LagView] = dict(lag_views or {})
        frame = frame.reset_index(drop=True)
        frame.index.name = "t"
        self._frame = frame
        if validate:
            self._validate()

    # -- construction ------------------------------------------------------

    def _validate(self) -> None:
        f = self._frame
        if "timestamp" not in f.columns:
            raise SchemaError("dataset frame lacks a `timestamp` column")
        ts = f["timestamp"]
        if ts.isna().any():
            raise SchemaError("missing timestamps are not allowed")
        if not ts.is_monotonic_increasing or ts.duplicated().any():
            dup = ts[ts.duplicated()]
            if not dup.empty:
                raise SchemaError(f"duplicate timestamp {dup.iloc[0]}")
            raise SchemaError("timestamps must be strictly increasing")
        if len(f) > 1:
            deltas = ts.diff().dropna().unique()
            if len(deltas) != 1 or deltas[0] != self.schema.step:
                raise SchemaError(
                    f"timestamps must be uniformly spaced at {self.schema.step}"
                )
        missing_cols = [c for c in self.schema.columns if c not in f.columns]
        if missing_cols:
            raise SchemaError(f"frame lacks declared columns: {missing_cols}")
        for col in self.schema.interventions:
            vals = f[col]
            if (vals.dropna() < 0).any():
                bad = f.loc[vals < 0, "timestamp"].iloc[0]
                raise DataError(f"negative intervention value in {col!r} at {bad}")

    # -- basic accessors ---------------------------------------------------

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame

    @property
    def n_units(self) -> int:
        return len(self._frame)

    @property
    def granularity(self) -> Granularity:
        return self.schema.granularity

    @property
    def timestamps(self) -> pd.Series:
        return self._frame["timestamp"]

    @property
    def units_per_day(self) -> int:
        return 24 if self.granularity == "hourly" else 1

    def column(self, name: str) -> pd.Series:
        if name not in self._frame.columns:
            raise DataError(f"unknown column {name!r}")
        return self._frame[name]

    def has_column(self, name: str) -> bool:
        return name in self._frame.columns

    def unit(self, t: int) -> Unit:
        row = self._frame.iloc[t]
        return Unit(
            index=int(t),
            timestamp=row["timestamp"],
            covariates={c: row[c] for c in self.schema.covariates},
            outcomes={c: row[c] for c in self.schema.outcomes},
            interventions={c: row[c] for c in self.schema.interventions},
        )

    # -- transformations ---------------------------------------------------

    def with_columns(self, columns: Mapping[str, pd.Series | np.ndarray]) -> "TimeSeriesDataset":
        """Return a copy with extra (non-schema) columns attached."""
        frame = self._frame.copy()
        for name, values in columns.items():
            frame[name] = values
        return TimeSeriesDataset(frame, self.schema, self.lag_views, validate=False)

    def with_lags(self, column: str, offsets: Iterable[int]) -> "TimeSeriesDataset":
        """Append shifted views of `column`; value at t equals the base at t+offset."""
        offsets = list(offsets)
        if not offsets:
            raise DataError("offsets must be nonempty")
        if column not in self._frame.columns:
            raise DataError(f"unknown column {column!r}")
        frame = self._frame.copy()
        views = dict(self.lag_views)
        for off in offsets:
            view = LagView(column, int(off))
            if view.offset == 0:
                continue
            # shift(-k) moves the value at t+k into position t
            frame[view.derived] = self._frame[column].shift(-view.offset)
            views[view.derived] = view
        return TimeSeriesDataset(frame, self.schema, views, validate=False)

    def with_calendar(self, calendar: CalendarTable) -> "TimeSeriesDataset":
        """Derive calendar covariates (hour, weekday, month, year, bank_day, holiday)."""
        ts = self._frame["timestamp"]
        cols: dict[str, np.ndarray] = {
            "weekday": ts.dt.weekday.to_numpy(),
            "month": ts.dt.month.to_numpy(),
            "year": ts.dt.year.to_numpy(),
        }
        if self.granularity == "hourly":
            cols["hour"] = ts.dt.hour.to_numpy()
        dates = ts.dt.date
        cols["bank_day"] = dates.map(lambda d: int(d in calendar.bank_days)).to_numpy()
        cols["holiday"] = dates.map(lambda d: int(calendar.is_holiday(d))).to_numpy()
        return self.with_columns(cols)

    # -- serialization -----------------------------------------------------

    def to_csv(self, path_or_buf=None) -> str | None:
        frame = self._frame.copy()
        frame["timestamp"] = frame["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%S")
        return frame.to_csv(path_or_buf, index=False)

    def content_hash(self) -> str:
        """SHA-256 of the canonical CSV serialization."""
        payload = self.to_csv(None)
        assert payload is not None
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _parse_timestamps(raw: pd.Series) -> pd.Series:
    try:
        ts = pd.to_datetime(raw, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"unparseable timestamp: {exc}") from exc
    if getattr(ts.dt, "tz", None) is not None:
        raise SchemaError("timestamps must be time-zone-naive local time")
    return ts


def _coerce_numeric(raw: pd.Series, name: str) -> pd.Series:
    try:
        return pd.to_numeric(raw)
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"column {name!r} is not numeric: {exc}") from exc


def ingest_csv(
    path,
    schema: Schema,
    calendar: CalendarTable | None = None,
) -> tuple[TimeSeriesDataset, IngestReport]:
    """Read and validate a CSV file against `schema`.

    The file must carry a header row with a `timestamp` column in ISO-8601;
    missing cells are empty. Optional per-cell imputation flags are read from
    `<column>__imputed` 0/1 companion columns. Grid gaps are filled with
    explicitly missing units and reported, duplicated timestamps are fatal.
    """
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    if "timestamp" not in raw.columns:
        raise SchemaError("CSV header lacks a `timestamp` column")
    missing_cols = [c for c in schema.columns if c not in raw.columns]
    if missing_cols:
        raise SchemaError(f"CSV header lacks declared columns: {missing_cols}")

    n_rows = len(raw)
    frame = pd.DataFrame({"timestamp": _parse_timestamps(raw["timestamp"])})
    for name in schema.columns:
        col = raw[name].replace("", np.nan)
        if schema.kind_of(name) == "numeric":
            frame[name] = _coerce_numeric(col, name)
        else:
            frame[name] = col.astype(object).where(col.notna(), np.nan)
    for name in schema.columns:
        flag_col = f"{name}__imputed"
        if flag_col in raw.columns:
            frame[flag_col] = _coerce_numeric(
                raw[flag_col].replace("", "0"), flag_col
            ).fillna(0).astype(np.int64)

    dup = frame["timestamp"][frame["timestamp"].duplicated()]
    if not dup.empty:
        raise SchemaError(f"duplicate timestamp {dup.iloc[0].isoformat()}")
    frame = frame.sort_values("timestamp").reset_index(drop=True)

    step = schema.step
    full = pd.date_range(frame["timestamp"].iloc[0], frame["timestamp"].iloc[-1], freq=step)
    misaligned = ~frame["timestamp"].isin(full)
    if misaligned.any():
        bad = frame.loc[misaligned, "timestamp"].iloc[0]
        raise SchemaError(f"timestamp {bad.isoformat()} is off the {schema.granularity} grid")

    gaps: list[tuple[pd.Timestamp, pd.Timestamp]] = []
    n_inserted = len(full) - len(frame)
    if n_inserted:
        present = pd.Index(frame["timestamp"])
        missing_ts = full.difference(present)
        runs = np.flatnonzero(np.diff(missing_ts.values) != step.to_timedelta64())
        starts = np.concatenate(([0], runs + 1))
        ends = np.concatenate((runs, [len(missing_ts) - 1]))
        gaps = [(missing_ts[a], missing_ts[b]) for a, b in zip(starts, ends)]
        frame = (
            frame.set_index("timestamp")
            .reindex(full)
            .rename_axis("timestamp")
            .reset_index()
        )

    gap_report = GapReport(
        n_expected=len(full),
        n_present=n_rows,
        n_inserted=n_inserted,
        gaps=tuple(gaps[:20]),
    )
    ds = TimeSeriesDataset(frame, schema)
    if calendar is not None:
        ds = ds.with_calendar(calendar)
    report = IngestReport(
        n_rows_read=n_rows,
        n_units=ds.n_units,
        missing_cells={c: int(ds.frame[c].isna().sum()) for c in schema.columns},
        gap_report=gap_report,
    )
    return ds, report


def dataset_from_frame(frame: pd.DataFrame, schema: Schema) -> TimeSeriesDataset:
    """Build a dataset from an in-memory frame, applying full validation."""
    return TimeSeriesDataset(frame, schema)
