"""Declarative run configuration: one JSON document drives the pipeline.

See README.md for the full schema. Every run is deterministic given the
same configuration and inputs; the root seed is mandatory and per-stage
seeds are derived from it by hashing stable stage labels.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import CALENDAR_COLUMNS, CalendarTable, Schema
from .design import ExperimentDesign, TreatmentRule
from .errors import ConfigError
from .matching import MatchSpec


def derive_seed(root_seed: int, *labels) -> int:
    """Stable 63-bit stage seed from the root seed and a label path."""
    payload = ":".join([str(root_seed), *map(str, labels)])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class AnalysisConfig:
    outcomes: tuple[str, ...]
    offsets: tuple[int, ...]
    statistic: str = "mean_difference"
    alpha: float = 0.05
    draws: int = 10_000
    exact_cutoff: int = 20
    grid_low: float = -10.0
    grid_high: float = 10.0
    grid_step: float = 0.1
    complete_case: bool = False
    subgroups: tuple[str, ...] = ()


@dataclass(frozen=True)
class SensitivityConfig:
    gammas: tuple[float, ...] = (1.0, 1.25, 1.5, 2.0)
    offsets: tuple[int, ...] = (0,)
    placebo_offsets: tuple[int, ...] = ()


@dataclass(frozen=True)
class RetrodesignConfig:
    effects: tuple[float, ...] = ()
    alpha: float = 0.05
    se: float | None = None  # default: Neyman standard error at offset 0


@dataclass(frozen=True)
class RunConfig:
    input_csv: Path
    schema: Schema
    calendar: CalendarTable
    treatment: TreatmentRule
    match_spec: MatchSpec
    analysis: AnalysisConfig
    sensitivity: SensitivityConfig
    retrodesign: RetrodesignConfig
    spillover_horizons_days: tuple[float, ...]
    seed: int
    threads: int
    output_dir: Path
    raw: dict = field(repr=False, default_factory=dict)

    def config_hash(self) -> str:
        payload = json.dumps(self.raw, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _require(raw: dict, key: str, where: str = "run config"):
    if key not in raw:
        raise ConfigError(f"{where} lacks required key {key!r}")
    return raw[key]


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw, base_dir=path.parent)


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    base = base_dir or Path.cwd()

    input_block = _require(raw, "input")
    schema = Schema.from_dict(_require(input_block, "schema", "input"))
    calendar = CalendarTable.from_dict(input_block.get("calendar", {}))
    csv_path = Path(_require(input_block, "csv", "input"))
    if not csv_path.is_absolute():
        csv_path = base / csv_path

    treatment = TreatmentRule.from_dict(_require(raw, "treatment"))
    if treatment.column not in schema.interventions:
        raise ConfigError(
            f"treatment column {treatment.column!r} is not a declared intervention"
        )

    match_spec = MatchSpec.from_dict(_require(raw, "match"))
    known = set(schema.columns) | set(CALENDAR_COLUMNS)
    for constraint in match_spec.constraints:
        if constraint.column not in known:
            raise ConfigError(
                f"match constraint references unknown covariate {constraint.column!r}"
            )

    analysis_raw = _require(raw, "analysis")
    outcomes = tuple(_require(analysis_raw, "outcomes", "analysis"))
    for outcome in outcomes:
        if outcome not in schema.outcomes:
            raise ConfigError(f"analysis outcome {outcome!r} is not declared in the schema")
    offsets_raw = _require(analysis_raw, "offsets", "analysis")
    if isinstance(offsets_raw, (list, tuple)) and len(offsets_raw) == 2:
        offsets = tuple(range(int(offsets_raw[0]), int(offsets_raw[1]) + 1))
    else:
        offsets = tuple(int(o) for o in offsets_raw)
    try:
        ExperimentDesign(rule=treatment, offsets=offsets, outcomes=outcomes)
    except ConfigError:
        raise ConfigError("analysis offsets must be a contiguous range containing 0")
    analysis = AnalysisConfig(
        outcomes=outcomes,
        offsets=offsets,
        statistic=analysis_raw.get("statistic", "mean_difference"),
        alpha=float(analysis_raw.get("alpha", 0.05)),
        draws=int(analysis_raw.get("draws", 10_000)),
        exact_cutoff=int(analysis_raw.get("exact_cutoff", 20)),
        grid_low=float(analysis_raw.get("grid_low", -10.0)),
        grid_high=float(analysis_raw.get("grid_high", 10.0)),
        grid_step=float(analysis_raw.get("grid_step", 0.1)),
        complete_case=bool(analysis_raw.get("complete_case", False)),
        subgroups=tuple(analysis_raw.get("subgroups", ())),
    )
    for column in analysis.subgroups:
        if column not in known:
            raise ConfigError(f"subgroup column {column!r} is not a known covariate")

    sens_raw = raw.get("sensitivity", {})
    sensitivity = SensitivityConfig(
        gammas=tuple(float(g) for g in sens_raw.get("gammas", (1.0, 1.25, 1.5, 2.0))),
        offsets=tuple(int(o) for o in sens_raw.get("offsets", (0,))),
        placebo_offsets=tuple(int(o) for o in sens_raw.get("placebo_offsets", ())),
    )

    retro_raw = raw.get("retrodesign", {})
    retro = RetrodesignConfig(
        effects=tuple(float(e) for e in retro_raw.get("effects", ())),
        alpha=float(retro_raw.get("alpha", analysis.alpha)),
        se=retro_raw.get("se"),
    )

    if "seed" not in raw:
        raise ConfigError("run config must pin a root seed")

    output_dir = Path(raw.get("output_dir", "out"))
    if not output_dir.is_absolute():
        output_dir = base / output_dir

    return RunConfig(
        input_csv=csv_path,
        schema=schema,
        calendar=calendar,
        treatment=treatment,
        match_spec=match_spec,
        analysis=analysis,
        sensitivity=sensitivity,
        retrodesign=retro,
        spillover_horizons_days=tuple(
            float(h) for h in raw.get("spillover_horizons_days", (5.0 / 24.0, 1.0))
        ),
        seed=int(raw["seed"]),
        threads=int(raw.get("threads", 1)),
        output_dir=output_dir,
        raw=raw,
    )
