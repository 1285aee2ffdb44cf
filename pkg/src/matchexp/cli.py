"""Command-line interface.

Every subcommand is driven by a JSON run configuration (see README.md) and
recomputes its stage prefix deterministically, so the commands can run in
any order and produce byte-identical outputs for identical inputs.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigError, DataError, MatchexpError
from .pipeline import (
    build_pairs,
    emit_balance,
    emit_ingest,
    emit_intervals,
    emit_match,
    emit_retrodesign,
    emit_sensitivity,
    label_dataset,
    prepare_dataset,
    run,
)
from .synth import SynthConfig, generate

THREADS_ENV = "MATCHEXP_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matchexp",
        description="Matched pairwise experiments from observational time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("ingest", "validate the input CSV and report missingness and gaps"),
        ("match", "assign treatment and build the matched pair set"),
        ("balance", "covariate balance tables and the randomization check"),
        ("estimate", "point estimates and intervals per outcome and offset"),
        ("sensitivity", "hidden-bias intervals and placebo lag analysis"),
        ("retrodesign", "retrospective power / type S / type M curves"),
        ("simulate", "generate a synthetic dataset from a `synth` config block"),
        ("run", "all stages plus the run manifest"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="path to the JSON run config")
        cmd.add_argument("--seed", type=int, default=None, help="override the root seed")
        cmd.add_argument(
            "--threads", type=int, default=None, help="worker threads for inference"
        )
        cmd.add_argument("--out", default=None, help="override the output directory")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    threads = os.environ.get(THREADS_ENV)
    if threads is not None:
        updates["threads"] = int(threads)
    elif args.threads is not None:
        updates["threads"] = args.threads
    if args.out is not None:
        updates["output_dir"] = Path(args.out)
    return dataclasses.replace(config, **updates) if updates else config


def _simulate(args: argparse.Namespace) -> None:
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if "synth" not in raw:
        raise ConfigError("simulate needs a `synth` block in the config")
    synth_raw = dict(raw["synth"])
    if args.seed is not None:
        synth_raw["seed"] = args.seed
    config = SynthConfig.from_dict(synth_raw)
    out = Path(args.out or raw.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    dataset, truth = generate(config)
    (out / "dataset.csv").write_text(dataset.to_csv(None))
    (out / "truth.json").write_text(
        json.dumps(
            {
                "effect_mean": float(truth.unit_effects.mean()),
                "n_treated": int(truth.treated.sum()),
                "n_arrivals": truth.n_arrivals,
                "in_window_fraction": truth.in_window_fraction,
                "confounding": truth.confounding,
                "dataset_sha256": dataset.content_hash(),
            },
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    print(f"simulate: wrote {dataset.n_units} units to {out / 'dataset.csv'}")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            _simulate(args)
            return EXIT_OK

        config = _apply_overrides(load_config(args.config), args)
        out = config.output_dir
        out.mkdir(parents=True, exist_ok=True)

        if args.command == "run":
            result = run(config)
            print(f"run: {result.manifest['n_pairs']} pairs; bundle in {out}")
            return EXIT_OK

        dataset, report = prepare_dataset(config)
        if args.command == "ingest":
            emit_ingest(config, out, dataset, report)
            print(
                f"ingest: {report.n_rows_read} rows -> {report.n_units} units "
                f"({report.gap_report.n_inserted} gap units inserted)"
            )
            return EXIT_OK

        labeled, summary = label_dataset(config, dataset)
        pairs, edges = build_pairs(config, labeled)
        if args.command == "match":
            emit_match(config, out, pairs, edges, summary)
            print(
                f"match: {summary.n_treated} treated / {summary.n_control} control "
                f"/ {summary.n_excluded} excluded -> {pairs.n_pairs} pairs"
            )
        elif args.command == "balance":
            emit_balance(config, out, labeled, pairs)
            print(f"balance: tables for {pairs.n_pairs} pairs in {out}")
        elif args.command == "estimate":
            emit_intervals(config, out, labeled, pairs)
            print(
                f"estimate: {len(config.analysis.outcomes)} outcomes x "
                f"{len(config.analysis.offsets)} offsets in {out}"
            )
        elif args.command == "sensitivity":
            emit_sensitivity(config, out, pairs)
            print(f"sensitivity: ladder over {config.sensitivity.gammas} in {out}")
        elif args.command == "retrodesign":
            emit_retrodesign(config, out, pairs)
            print(f"retrodesign: curves in {out}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"matchexp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"matchexp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MatchexpError as exc:
        print(f"matchexp: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
