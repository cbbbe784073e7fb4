"""Command-line driver for the scorecard pipeline.

Subcommands mirror the workflow: split, rank, parsimony, build, finetune,
evaluate, predict, simulate. Pipeline commands take --config (one JSON
document), with --out-dir and --seed as overrides; the human decisions
(variable selection after the parsimony plot, cut-off fine-tuning) happen as
config edits between commands. Exit codes: 0 success, 1 validation error,
2 runtime or convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .data import (generate_synthetic, read_synthetic_spec, table_schema,
                   write_csv, write_schema)
from .errors import ValidationError
from .pipeline import (read_imputation, run_build, run_evaluate, run_parsimony,
                       run_rank, run_split)
from .scorecard import read_card_json, read_lookup_csv
from .serial import fmt_number
from .transform import interval_labels


def _pipeline_config(args):
    config = load_config(args.config, seed_override=args.seed)
    if args.out_dir is not None:
        config = replace(config, output_dir=args.out_dir)
    return config


def cmd_split(args) -> int:
    config = _pipeline_config(args)
    path = run_split(config)
    print(f"wrote {path}")
    return 0


def cmd_rank(args) -> int:
    config = _pipeline_config(args)
    ranking = run_rank(config)
    print(f"wrote {Path(config.output_dir) / 'ranking.csv'} "
          f"({len(ranking.entries)} variables)")
    for rank, (name, value) in enumerate(ranking.entries[:10], start=1):
        print(f"  {rank:2d}. {name}  {value:.4f}")
    return 0


def cmd_parsimony(args) -> int:
    config = _pipeline_config(args)
    curve = run_parsimony(config)
    out_dir = Path(config.output_dir)
    print(f"wrote {out_dir / 'parsimony.csv'} and {out_dir / 'parsimony.svg'}")
    for pt in curve.points:
        flag = "" if pt.converged else "  (fit did not converge)"
        print(f"  k={pt.k:2d}  +{pt.variable}  mAUC={pt.mauc:.4f}{flag}")
    return 0


def cmd_build(args) -> int:
    config = _pipeline_config(args)
    card, lookup = run_build(config)
    out_dir = Path(config.output_dir)
    print(f"wrote {out_dir / 'scorecard.json'}, {out_dir / 'scorecard.csv'}, "
          f"{out_dir / 'lookup.csv'}")
    print(f"  variables: {', '.join(card.variables)}")
    print(f"  max total score: {card.max_total}; lookup bins: {len(lookup.uppers)}")
    return 0


def cmd_finetune(args) -> int:
    config = _pipeline_config(args)
    if args.overrides is not None:
        config = replace(config, overrides=args.overrides)
    card, lookup = run_build(config, stage_name="finetune",
                             require_overrides=True)
    out_dir = Path(config.output_dir)
    print(f"rebuilt {out_dir / 'scorecard.json'} with cut-off overrides")
    print(f"  max total score: {card.max_total}; lookup bins: {len(lookup.uppers)}")
    return 0


def cmd_evaluate(args) -> int:
    config = _pipeline_config(args)
    reports = run_evaluate(config, with_pom=args.pom, with_forest=args.forest)
    out_dir = Path(config.output_dir)
    print(f"wrote {out_dir / 'report.json'} and {out_dir / 'report.csv'}")
    for report in reports:
        print(f"  {report.model}: mAUC {report.mauc.point:.4f} "
              f"({report.mauc.lower:.4f}, {report.mauc.upper:.4f}); "
              f"c-index {report.c_index.point:.4f} "
              f"({report.c_index.lower:.4f}, {report.c_index.upper:.4f})")
    return 0


# --- predict ----------------------------------------------------------------------


def _resolve_predict_paths(args):
    card_path, lookup_path, plan_path = args.card, args.lookup, args.imputation
    if args.out_dir is not None:
        out_dir = Path(args.out_dir)
        card_path = card_path or out_dir / "scorecard.json"
        lookup_path = lookup_path or out_dir / "lookup.csv"
        if plan_path is None and (out_dir / "imputation.json").exists():
            plan_path = out_dir / "imputation.json"
    if card_path is None or lookup_path is None:
        raise ValidationError(
            "predict needs --card and --lookup (or --out-dir to find them)")
    return card_path, lookup_path, plan_path


def _score_rows(card, lookup, plan, header, rows):
    """Categorize, total, and look up each row; yields output rows."""
    unknown = [h for h in header if h not in card.variables]
    if unknown:
        raise ValidationError(f"input columns not in the scorecard: {unknown}")
    missing = [v for v in card.variables if v not in header]
    if missing:
        raise ValidationError(f"input is missing scorecard variables: {missing}")
    position = {name: header.index(name) for name in header}
    cutoffs = card.cutoffs or {}

    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ValidationError(f"input row {i}: wrong field count")
        labels = {}
        for var in card.variables:
            cell = row[position[var]]
            if var in cutoffs:
                if cell == "":
                    if plan is None or var not in plan.fill:
                        raise ValidationError(
                            f"input row {i}, column {var!r}: missing value and "
                            "no imputation plan supplied")
                    value = plan.fill[var]
                else:
                    try:
                        value = float(cell)
                    except ValueError:
                        raise ValidationError(
                            f"input row {i}, column {var!r}: not a number: "
                            f"{cell!r}") from None
                cuts = cutoffs[var]
                labels[var] = interval_labels(cuts)[
                    int(np.searchsorted(np.asarray(cuts), value, side="right"))]
            else:
                if cell not in card.categories[var]:
                    raise ValidationError(
                        f"input row {i}, column {var!r}: value {cell!r} outside "
                        "declared categories")
                labels[var] = cell
        total = 0
        for var in card.variables:
            total += card.points[var][labels[var]]
        probs = lookup.probs[lookup.bin_index(total)]
        yield list(row) + [str(total)] + [fmt_number(float(p)) for p in probs]


def cmd_predict(args) -> int:
    card_path, lookup_path, plan_path = _resolve_predict_paths(args)
    card = read_card_json(card_path)
    lookup = read_lookup_csv(lookup_path, card.max_total)
    if tuple(lookup.outcome_labels) != tuple(card.outcome_labels):
        raise ValidationError(
            "lookup outcome categories do not match the scorecard")
    plan = None if plan_path is None else read_imputation(plan_path)

    input_path = Path(args.input)
    if not input_path.exists():
        raise ValidationError(f"no such file: {input_path}")
    with open(input_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{input_path}: empty file")
        rows = list(reader)

    out_header = (header + ["total_score"]
                  + [f"p_{label}" for label in card.outcome_labels])
    out_rows = list(_score_rows(card, lookup, plan, header, rows))

    if args.output is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(out_header)
        writer.writerows(out_rows)
    else:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(out_header)
            writer.writerows(out_rows)
        print(f"wrote {args.output} ({len(out_rows)} rows)")
    return 0


def cmd_simulate(args) -> int:
    spec = read_synthetic_spec(args.spec)
    table = generate_synthetic(spec)
    out_dir = Path(args.out_dir if args.out_dir is not None else ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "synthetic.csv"
    schema_path = out_dir / "synthetic_schema.json"
    write_csv(data_path, table)
    write_schema(schema_path, table_schema(table))
    print(f"wrote {data_path} ({table.n_rows} rows) and {schema_path}")
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ordiscore",
        description="Interpretable integer scorecards for ordinal outcomes.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def pipeline_command(name, help_text, func):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--out-dir", default=None,
                       help="override the config output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override every stage seed in the config")
        p.set_defaults(func=func)
        return p

    pipeline_command("split", "stratified train/validation/test split",
                     cmd_split)
    pipeline_command("rank", "forest importance ranking of all variables",
                     cmd_rank)
    pipeline_command("parsimony", "validation mAUC for k = 1.. top variables",
                     cmd_parsimony)
    pipeline_command("build", "cut-offs, model fit, scorecard, and lookup",
                     cmd_build)
    finetune = pipeline_command(
        "finetune", "rebuild the scorecard with cut-off overrides",
        cmd_finetune)
    finetune.add_argument("--overrides", default=None,
                          help="cut-off override JSON (else config overrides)")
    evaluate = pipeline_command(
        "evaluate", "test-split metrics with bootstrap intervals",
        cmd_evaluate)
    evaluate.add_argument("--pom", action="store_true",
                          help="add a linear-predictor comparator row")
    evaluate.add_argument("--forest", action="store_true",
                          help="add a forest-prediction comparator row")

    predict = sub.add_parser(
        "predict", help="score new rows with a scorecard and lookup table")
    predict.add_argument("--card", default=None, help="scorecard JSON")
    predict.add_argument("--lookup", default=None, help="lookup CSV")
    predict.add_argument("--imputation", default=None,
                         help="imputation plan JSON for missing values")
    predict.add_argument("--out-dir", default=None,
                         help="artifact directory to find card/lookup/plan in")
    predict.add_argument("--input", required=True, help="CSV of rows to score")
    predict.add_argument("--output", default=None,
                         help="output CSV (default: stdout)")
    predict.set_defaults(func=cmd_predict)

    simulate = sub.add_parser(
        "simulate", help="generate a synthetic dataset from a known model")
    simulate.add_argument("--spec", required=True, help="generator spec JSON")
    simulate.add_argument("--out-dir", default=None,
                          help="directory for synthetic.csv and its schema")
    simulate.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 0
    except Exception as exc:  # convergence and other runtime failures
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
