"""End-to-end pipeline: one declarative config in, a report bundle out.

Every stage is deterministic given the config and inputs; per-stage seeds
are derived from the root seed, outputs carry no wall-clock state, and the
manifest lists a content hash for every file so a re-run can be verified
bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .balance import balance_report, randomization_check
from .config import RunConfig, derive_seed
from .dataset import IngestReport, TimeSeriesDataset, ingest_csv
from .design import TreatmentSummary, assign_treatment
from .errors import MatchexpError
from .inference import (
    InferenceSettings,
    SharpNullGrid,
    estimate_intervals,
    pair_differences,
    subgroup_analysis,
)
from .matching import (
    EdgeSet,
    MatchedPairSet,
    complete_case_filter,
    match_pairs,
    required_lag_columns,
    spillover_report,
)
from .retrodesign import curve_frame, retrodesign_curve
from .sensitivity import GammaLadder, placebo_lag_analysis, rosenbaum_intervals


@contextmanager
def _stage(name: str):
    """Qualify any package error with the stage it arose in."""
    try:
        yield
    except MatchexpError as exc:
        raise type(exc)(f"{name}: {exc}") from exc


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_csv(path: Path, frame: pd.DataFrame) -> None:
    _write_text(path, frame.to_csv(index=False))


def _write_json(path: Path, payload) -> None:
    _write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _timestamps(ds: TimeSeriesDataset, indices: np.ndarray) -> np.ndarray:
    return ds.timestamps.iloc[indices].dt.strftime("%Y-%m-%dT%H:%M:%S").to_numpy()


# ---------------------------------------------------------------------------
# Stage computations (shared by `run` and the narrower CLI subcommands)
# ---------------------------------------------------------------------------


def prepare_dataset(config: RunConfig) -> tuple[TimeSeriesDataset, IngestReport]:
    """Ingest the input CSV, derive calendar columns, materialize lag views."""
    with _stage("core-data"):
        dataset, report = ingest_csv(config.input_csv, config.schema, config.calendar)
        for column, offsets in required_lag_columns(config.match_spec).items():
            dataset = dataset.with_lags(column, offsets)
    return dataset, report


def label_dataset(
    config: RunConfig, dataset: TimeSeriesDataset
) -> tuple[TimeSeriesDataset, TreatmentSummary]:
    with _stage("design"):
        return assign_treatment(dataset, config.treatment)


def build_pairs(
    config: RunConfig, labeled: TimeSeriesDataset
) -> tuple[MatchedPairSet, EdgeSet]:
    with _stage("matching"):
        return match_pairs(
            labeled,
            config.match_spec,
            intervention_column=config.treatment.column,
        )


def _inference_settings(config: RunConfig, seed: int) -> InferenceSettings:
    grid = SharpNullGrid.regular(
        step=config.analysis.grid_step,
        alpha=config.analysis.alpha,
        low=config.analysis.grid_low,
        high=config.analysis.grid_high,
    )
    return InferenceSettings(
        grid=grid,
        alpha=config.analysis.alpha,
        draws=config.analysis.draws,
        exact_cutoff=config.analysis.exact_cutoff,
        seed=seed,
        statistic=config.analysis.statistic,
        threads=config.threads,
    )


def _analysis_pairs(
    config: RunConfig, pairs: MatchedPairSet, outcome: str
) -> tuple[MatchedPairSet, float]:
    if not config.analysis.complete_case:
        return pairs, 0.0
    filtered, cc = complete_case_filter(pairs, outcome, config.analysis.offsets)
    return filtered, cc.fraction_dropped


def emit_ingest(
    config: RunConfig,
    out: Path,
    dataset: TimeSeriesDataset,
    report: IngestReport,
) -> list[Path]:
    report_path = out / "ingest_report.json"
    _write_json(
        report_path,
        {
            "n_rows_read": report.n_rows_read,
            "n_units": report.n_units,
            "missing_cells": report.missing_cells,
            "gaps_inserted": report.gap_report.n_inserted,
            "gap_ranges": [
                [a.isoformat(), b.isoformat()] for a, b in report.gap_report.gaps
            ],
            "dataset_sha256": dataset.content_hash(),
        },
    )
    dataset_path = out / "dataset.csv"
    _write_text(dataset_path, dataset.to_csv(None))
    return [report_path, dataset_path]


def emit_match(
    config: RunConfig,
    out: Path,
    pairs: MatchedPairSet,
    edges: EdgeSet,
    summary: TreatmentSummary,
) -> list[Path]:
    paths = []
    pairs_path = out / "pairs.csv"
    _write_csv(pairs_path, pairs.to_frame())
    paths.append(pairs_path)
    if pairs.n_pairs > 0:
        with _stage("matching"):
            spill = spillover_report(pairs, config.spillover_horizons_days)
        spill_path = out / "spillover.csv"
        _write_csv(spill_path, spill.to_frame())
        paths.append(spill_path)
        units_path = out / "spillover_units.csv"
        _write_csv(units_path, spill.units_frame())
        paths.append(units_path)
    summary_path = out / "match_summary.json"
    _write_json(
        summary_path,
        {
            "n_treated": summary.n_treated,
            "n_control": summary.n_control,
            "n_excluded": summary.n_excluded,
            "n_treated_missing_constraint": edges.n_treated_missing,
            "n_controls_missing_constraint": edges.n_controls_missing,
            "n_candidate_edges": edges.n_edges,
            "n_pairs": pairs.n_pairs,
        },
    )
    paths.append(summary_path)
    return paths


def emit_balance(
    config: RunConfig,
    out: Path,
    labeled: TimeSeriesDataset,
    pairs: MatchedPairSet,
) -> list[Path]:
    if pairs.n_pairs < 2:
        return []
    constrained = sorted({c.resolved_column for c in config.match_spec.constraints})
    with _stage("balance"):
        report = balance_report(labeled, pairs, constrained)
        numeric = [
            c for c in constrained if pd.api.types.is_numeric_dtype(labeled.column(c))
        ]
        check = randomization_check(
            pairs, numeric, n_perm=1000, seed=derive_seed(config.seed, "balance")
        )
    balance_path = out / "balance.csv"
    _write_csv(balance_path, report.to_frame())
    check_path = out / "balance_check.json"
    _write_json(
        check_path,
        {
            "observed": check.observed,
            "p_value": check.p_value,
            "covariance_rank": check.covariance_rank,
            "n_pairs_used": check.n_pairs_used,
            "n_dropped_missing": check.n_dropped_missing,
            "n_permutations": len(check.null_sample),
        },
    )
    return [balance_path, check_path]


def emit_intervals(
    config: RunConfig,
    out: Path,
    labeled: TimeSeriesDataset,
    pairs: MatchedPairSet,
) -> list[Path]:
    interval_dicts: list[dict] = []
    tidy_rows: list[dict] = []
    scatter_frames: list[pd.DataFrame] = []
    subgroup_rows: list[dict] = []

    if pairs.n_pairs >= 2:
        with _stage("inference"):
            for outcome in config.analysis.outcomes:
                analysis_pairs, dropped_fraction = _analysis_pairs(config, pairs, outcome)
                if analysis_pairs.n_pairs < 2:
                    continue
                for offset in config.analysis.offsets:
                    settings = _inference_settings(
                        config, derive_seed(config.seed, "inference", outcome, offset)
                    )
                    report = estimate_intervals(analysis_pairs, outcome, offset, settings)
                    entry = report.to_dict()
                    entry["complete_case_dropped_fraction"] = dropped_fraction
                    interval_dicts.append(entry)
                    tidy_rows.append(
                        {
                            "outcome": outcome,
                            "offset": offset,
                            "estimator": "fisherian",
                            "point": report.point_estimate,
                            "lower": report.fisherian.lower,
                            "upper": report.fisherian.upper,
                        }
                    )
                    tidy_rows.append(
                        {
                            "outcome": outcome,
                            "offset": offset,
                            "estimator": "neyman",
                            "point": report.neyman.estimate,
                            "lower": report.neyman.lower,
                            "upper": report.neyman.upper,
                        }
                    )
                    if report.studentized is not None:
                        tidy_rows.append(
                            {
                                "outcome": outcome,
                                "offset": offset,
                                "estimator": "studentized",
                                "point": report.point_estimate,
                                "lower": report.studentized.lower,
                                "upper": report.studentized.upper,
                            }
                        )

                out_vals = labeled.column(outcome).to_numpy(dtype=float)
                ivals = labeled.column(config.treatment.column).to_numpy(dtype=float)
                scatter_frames.append(
                    pd.DataFrame(
                        {
                            "outcome": outcome,
                            "treated_timestamp": _timestamps(
                                labeled, analysis_pairs.treated_indices
                            ),
                            "control_timestamp": _timestamps(
                                labeled, analysis_pairs.control_indices
                            ),
                            "outcome_difference": out_vals[analysis_pairs.treated_indices]
                            - out_vals[analysis_pairs.control_indices],
                            "intervention_difference": ivals[
                                analysis_pairs.treated_indices
                            ]
                            - ivals[analysis_pairs.control_indices],
                        }
                    )
                )

                for group_column in config.analysis.subgroups:
                    sub = subgroup_analysis(
                        analysis_pairs,
                        outcome,
                        0,
                        group_column,
                        _inference_settings(
                            config,
                            derive_seed(config.seed, "subgroup", outcome, group_column),
                        ),
                    )
                    for group, rep in sorted(sub.reports.items()):
                        subgroup_rows.append(
                            {
                                "outcome": outcome,
                                "group_column": group_column,
                                "group": group,
                                "n_pairs": rep.n_pairs,
                                "point": rep.point_estimate,
                                "lower": rep.fisherian.lower,
                                "upper": rep.fisherian.upper,
                            }
                        )
                    for group, n in sorted(sub.skipped.items()):
                        subgroup_rows.append(
                            {
                                "outcome": outcome,
                                "group_column": group_column,
                                "group": group,
                                "n_pairs": n,
                                "point": np.nan,
                                "lower": np.nan,
                                "upper": np.nan,
                            }
                        )

    paths = []
    intervals_json_path = out / "intervals.json"
    _write_json(intervals_json_path, interval_dicts)
    paths.append(intervals_json_path)

    tidy_path = out / "intervals.csv"
    _write_csv(
        tidy_path,
        pd.DataFrame(
            tidy_rows,
            columns=["outcome", "offset", "estimator", "point", "lower", "upper"],
        ),
    )
    paths.append(tidy_path)

    if scatter_frames:
        scatter_path = out / "pair_scatter.csv"
        _write_csv(scatter_path, pd.concat(scatter_frames, ignore_index=True))
        paths.append(scatter_path)
    if subgroup_rows:
        subgroup_path = out / "subgroups.csv"
        _write_csv(subgroup_path, pd.DataFrame(subgroup_rows))
        paths.append(subgroup_path)
    return paths


def emit_sensitivity(
    config: RunConfig,
    out: Path,
    pairs: MatchedPairSet,
) -> list[Path]:
    sensitivity_rows: list[dict] = []
    placebo_frames: list[pd.DataFrame] = []
    if pairs.n_pairs >= 2:
        with _stage("sensitivity"):
            ladder = GammaLadder(config.sensitivity.gammas)
            for outcome in config.analysis.outcomes:
                for offset in config.sensitivity.offsets:
                    d = pair_differences(pairs, outcome, offset)
                    settings = _inference_settings(
                        config, derive_seed(config.seed, "sensitivity", outcome, offset)
                    )
                    result = rosenbaum_intervals(
                        d,
                        grid=settings.grid,
                        alpha=settings.alpha,
                        ladder=ladder,
                        draws=settings.draws,
                        seed=settings.seed,
                        statistic=config.analysis.statistic,
                        exact_cutoff=settings.exact_cutoff,
                        threads=config.threads,
                    )
                    for gamma, interval in zip(result.gammas, result.intervals):
                        sensitivity_rows.append(
                            {
                                "outcome": outcome,
                                "offset": offset,
                                "gamma": gamma,
                                "lower": interval.lower,
                                "upper": interval.upper,
                            }
                        )
                if config.sensitivity.placebo_offsets:
                    settings = _inference_settings(
                        config, derive_seed(config.seed, "placebo", outcome)
                    )
                    placebo = placebo_lag_analysis(
                        pairs, outcome, config.sensitivity.placebo_offsets, settings
                    )
                    table = placebo.to_frame()
                    table.insert(0, "outcome", outcome)
                    placebo_frames.append(table)

    paths = []
    sens_path = out / "sensitivity.csv"
    _write_csv(
        sens_path,
        pd.DataFrame(
            sensitivity_rows, columns=["outcome", "offset", "gamma", "lower", "upper"]
        ),
    )
    paths.append(sens_path)
    if placebo_frames:
        placebo_path = out / "placebo.csv"
        _write_csv(placebo_path, pd.concat(placebo_frames, ignore_index=True))
        paths.append(placebo_path)
    return paths


def emit_retrodesign(
    config: RunConfig,
    out: Path,
    pairs: MatchedPairSet | None,
) -> list[Path]:
    frames: list[pd.DataFrame] = []
    with _stage("retrodesign"):
        if pairs is not None and pairs.n_pairs >= 2:
            for outcome in config.analysis.outcomes:
                d = pair_differences(pairs, outcome, 0)
                tau_hat = float(np.mean(d.values))
                if config.retrodesign.se is not None:
                    se = float(config.retrodesign.se)
                else:
                    n = d.n_pairs
                    se = float(np.sqrt(np.sum((d.values - tau_hat) ** 2) / (n * (n - 1))))
                if config.retrodesign.effects:
                    effects = sorted(config.retrodesign.effects)
                elif tau_hat != 0:
                    effects = [abs(tau_hat) * k / 10.0 for k in range(1, 21)]
                else:
                    continue
                results = retrodesign_curve(se, effects, config.retrodesign.alpha)
                table = curve_frame(results, half_point=tau_hat)
                table.insert(0, "outcome", outcome)
                frames.append(table)
        elif config.retrodesign.se is not None and config.retrodesign.effects:
            results = retrodesign_curve(
                config.retrodesign.se,
                sorted(config.retrodesign.effects),
                config.retrodesign.alpha,
            )
            table = curve_frame(results)
            table.insert(0, "outcome", "")
            frames.append(table)

    if not frames:
        return []
    retro_path = out / "retrodesign.csv"
    _write_csv(retro_path, pd.concat(frames, ignore_index=True))
    return [retro_path]


@dataclass
class RunResult:
    output_dir: Path
    manifest: dict


def run(config: RunConfig) -> RunResult:
    """Execute all stages and write the report bundle plus its manifest."""
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)

    dataset, ingest_report = prepare_dataset(config)
    labeled, treatment_summary = label_dataset(config, dataset)
    pairs, edges = build_pairs(config, labeled)

    outputs: list[Path] = []
    outputs += emit_match(config, out, pairs, edges, treatment_summary)
    outputs += emit_balance(config, out, labeled, pairs)
    outputs += emit_intervals(config, out, labeled, pairs)
    outputs += emit_sensitivity(config, out, pairs)
    outputs += emit_retrodesign(config, out, pairs)

    manifest = {
        "version": __version__,
        "seed": config.seed,
        "config_sha256": config.config_hash(),
        "dataset_sha256": dataset.content_hash(),
        "spec_sha256": config.match_spec.spec_hash(),
        "n_units": dataset.n_units,
        "n_rows_read": ingest_report.n_rows_read,
        "n_treated": treatment_summary.n_treated,
        "n_control": treatment_summary.n_control,
        "n_excluded": treatment_summary.n_excluded,
        "n_candidate_edges": edges.n_edges,
        "n_pairs": pairs.n_pairs,
        "empty_experiment": pairs.n_pairs == 0,
        "outputs": {p.name: _file_hash(p) for p in sorted(outputs)},
    }
    manifest_path = out / "manifest.json"
    _write_json(manifest_path, manifest)
    return RunResult(output_dir=out, manifest=manifest)
