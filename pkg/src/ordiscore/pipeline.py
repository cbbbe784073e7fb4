"""Pipeline stages and the run manifest.

Each stage reads the config plus its declared input artifacts, writes its
output artifacts into the config's output directory, and records digests of
both sides in manifest.json. Artifacts are deterministic functions of the
config and seeds; the manifest's digest map is how reruns are compared
(timestamps are recorded but never part of any digest).
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, config_digest
from .data import (DataTable, ImputationPlan, SplitIndices, impute, load_csv,
                   plan_imputation, read_schema, read_splits, stratified_split,
                   write_splits)
from .errors import ValidationError
from .metrics import (EvalReport, evaluate_scores, parsimony_curve,
                      parsimony_svg, report_to_doc, write_parsimony_csv,
                      write_report_csv)
from .pom import fit_from_doc, fit_pom, fit_to_doc, linear_predictors, refit_positive
from .ranking import (ImportanceRanking, forest_predict, rank_variables,
                      read_ranking, train_forest, write_ranking)
from .scorecard import (ScoreCard, build_lookup, derive_scorecard,
                        read_card_json, read_lookup_csv, total_scores,
                        write_card_csv, write_card_json, write_lookup_csv)
from .serial import canonical_json, sha256_file, sha256_text, write_text
from .transform import (CutoffSpec, apply_overrides, categorize, derive_cutoffs,
                        prune_cutoffs, read_cutoffs, write_cutoffs)

MANIFEST_NAME = "manifest.json"


# --- manifest -------------------------------------------------------------------


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ")


def load_manifest(out_dir: Path) -> dict:
    path = out_dir / MANIFEST_NAME
    if not path.exists():
        return {"version": __version__, "stages": {}}
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read manifest: {exc}") from exc
    doc.setdefault("stages", {})
    return doc


def record_stage(out_dir: Path, config: PipelineConfig, stage: str,
                 inputs: dict[str, str], outputs: dict[str, str]) -> None:
    """Update one stage entry: input/output digests plus a completion time."""
    manifest = load_manifest(out_dir)
    manifest["version"] = __version__
    manifest["config_digest"] = config_digest(config)
    manifest["stages"][stage] = {
        "inputs": dict(sorted(inputs.items())),
        "outputs": dict(sorted(outputs.items())),
        "completed_at": _utc_now(),
    }
    write_text(out_dir / MANIFEST_NAME, canonical_json(manifest))


def artifact_digests(manifest: dict) -> dict[str, str]:
    """Flat {artifact name: digest} map across stages; the determinism contract."""
    digests: dict[str, str] = {}
    for stage in sorted(manifest.get("stages", {})):
        digests.update(manifest["stages"][stage].get("outputs", {}))
    return digests


def _digest_outputs(out_dir: Path, names: list[str]) -> dict[str, str]:
    return {name: sha256_file(out_dir / name) for name in names}


# --- shared loading ---------------------------------------------------------------


@dataclass(frozen=True)
class LoadedData:
    table: DataTable
    split: SplitIndices
    plan: ImputationPlan


def _load_table(config: PipelineConfig) -> DataTable:
    return load_csv(config.data, read_schema(config.schema))


def _require(out_dir: Path, name: str, producer: str) -> Path:
    path = out_dir / name
    if not path.exists():
        raise ValidationError(
            f"missing artifact {name}; run the {producer} command first")
    return path


def _load_prepared(config: PipelineConfig, out_dir: Path) -> LoadedData:
    """Data plus persisted splits plus the imputation plan they imply."""
    table = _load_table(config)
    split = read_splits(_require(out_dir, "splits.csv", "split"), table.n_rows)
    plan = plan_imputation(table, split, config.reference_split)
    return LoadedData(table, split, plan)


def _selected(config: PipelineConfig, table: DataTable) -> list[str]:
    if config.selected_variables is None:
        raise ValidationError(
            "config model.selected_variables is not set; inspect the parsimony "
            "curve and list the variables to build with")
    missing = [v for v in config.selected_variables
               if v not in table.variable_names]
    if missing:
        raise ValidationError(f"selected variables not in schema: {missing}")
    if not config.selected_variables:
        raise ValidationError("selected variable list is empty")
    return list(config.selected_variables)


# --- stages -----------------------------------------------------------------------


def run_split(config: PipelineConfig) -> Path:
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = _load_table(config)
    split = stratified_split(table, config.split_ratios, config.split_seed)
    write_splits(out_dir / "splits.csv", split)
    record_stage(out_dir, config, "split",
                 inputs={"data": sha256_file(config.data),
                         "schema": sha256_file(config.schema)},
                 outputs=_digest_outputs(out_dir, ["splits.csv"]))
    return out_dir / "splits.csv"


def run_rank(config: PipelineConfig) -> ImportanceRanking:
    out_dir = Path(config.output_dir)
    loaded = _load_prepared(config, out_dir)
    train = impute(loaded.table.subset(loaded.split.train), loaded.plan)
    ranking = rank_variables(
        train, n_trees=config.n_trees, mtry=config.mtry,
        min_node_size=config.min_node_size, max_depth=config.max_depth,
        seed=config.forest_seed)
    write_ranking(out_dir / "ranking.csv", ranking)
    record_stage(out_dir, config, "rank",
                 inputs={"data": sha256_file(config.data),
                         "schema": sha256_file(config.schema),
                         "splits.csv": sha256_file(out_dir / "splits.csv")},
                 outputs=_digest_outputs(out_dir, ["ranking.csv"]))
    return ranking


def run_parsimony(config: PipelineConfig):
    out_dir = Path(config.output_dir)
    loaded = _load_prepared(config, out_dir)
    ranking = read_ranking(_require(out_dir, "ranking.csv", "rank"))
    train = impute(loaded.table.subset(loaded.split.train), loaded.plan)
    validation = impute(loaded.table.subset(loaded.split.validation), loaded.plan)
    k_max = len(ranking.variables) if config.max_k is None \
        else min(config.max_k, len(ranking.variables))
    if k_max < 1:
        raise ValidationError("parsimony needs max_k >= 1")
    curve = parsimony_curve(ranking.variables[:k_max], train, validation, config)
    write_parsimony_csv(out_dir / "parsimony.csv", curve)
    write_text(out_dir / "parsimony.svg", parsimony_svg(curve))
    record_stage(out_dir, config, "parsimony",
                 inputs={"data": sha256_file(config.data),
                         "schema": sha256_file(config.schema),
                         "splits.csv": sha256_file(out_dir / "splits.csv"),
                         "ranking.csv": sha256_file(out_dir / "ranking.csv")},
                 outputs=_digest_outputs(out_dir,
                                         ["parsimony.csv", "parsimony.svg"]))
    return curve


def run_build(config: PipelineConfig, stage_name: str = "build",
              require_overrides: bool = False):
    """Cut-offs, fit, scorecard, and lookup for the selected variables.

    The finetune command is this stage with the config's overrides file made
    mandatory; build applies overrides too when the config names a file.
    """
    out_dir = Path(config.output_dir)
    loaded = _load_prepared(config, out_dir)
    selected = _selected(config, loaded.table)
    train = impute(loaded.table.subset(loaded.split.train), loaded.plan) \
        .select_variables(selected)

    cuts = prune_cutoffs(derive_cutoffs(train, config.percentiles), train,
                         config.min_bin_fraction)
    override_digest = {}
    if require_overrides and not config.overrides:
        raise ValidationError(
            "finetune requires config overrides: the path to a cut-off "
            "override file")
    if config.overrides:
        override_path = Path(config.overrides)
        if not override_path.exists():
            raise ValidationError(f"overrides file does not exist: {override_path}")
        overrides = read_cutoffs(override_path)
        cuts = apply_overrides(cuts, overrides.cutoffs)
        override_digest["overrides"] = sha256_file(override_path)

    train_cat = categorize(train, cuts)
    fit = fit_pom(train_cat, link=config.link, grad_tol=config.grad_tol,
                  max_iter=config.max_iter)
    positive = refit_positive(fit, train_cat, grad_tol=config.grad_tol,
                              max_iter=config.max_iter)
    fit_doc = canonical_json(fit_to_doc(positive))
    card = derive_scorecard(positive, config.max_total_target)
    card = ScoreCard(
        variables=card.variables,
        categories=card.categories,
        points=card.points,
        scale_factor=card.scale_factor,
        max_total=card.max_total,
        outcome_labels=card.outcome_labels,
        cutoffs={v: tuple(c) for v, c in cuts.cutoffs.items()},
        fit_digest=sha256_text(fit_doc),
    )
    lookup = build_lookup(card, train_cat, config.bin_width, config.min_bin_count)

    write_text(out_dir / "fit.json", fit_doc)
    write_card_json(out_dir / "scorecard.json", card)
    write_card_csv(out_dir / "scorecard.csv", card)
    write_lookup_csv(out_dir / "lookup.csv", lookup)
    write_cutoffs(out_dir / "cutoffs.json", cuts)
    write_text(out_dir / "imputation.json", canonical_json(
        {"reference_split": loaded.plan.reference_split,
         "fill": dict(sorted(loaded.plan.fill.items()))}))

    outputs = _digest_outputs(out_dir, [
        "fit.json", "scorecard.json", "scorecard.csv", "lookup.csv",
        "cutoffs.json", "imputation.json"])
    record_stage(out_dir, config, stage_name,
                 inputs={"data": sha256_file(config.data),
                         "schema": sha256_file(config.schema),
                         "splits.csv": sha256_file(out_dir / "splits.csv"),
                         **override_digest},
                 outputs=outputs)
    return card, lookup


def read_imputation(path) -> ImputationPlan:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return ImputationPlan({k: float(v) for k, v in doc["fill"].items()},
                              doc["reference_split"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot read imputation plan: {exc}") from exc


def run_evaluate(config: PipelineConfig, with_pom: bool = False,
                 with_forest: bool = False) -> list[EvalReport]:
    """Test-split metrics for the scorecard and optional comparator rows."""
    if config.bootstrap_b < 2:
        raise ValidationError("bootstrap B must be >= 2 to form an interval")
    out_dir = Path(config.output_dir)
    loaded = _load_prepared(config, out_dir)
    card = read_card_json(_require(out_dir, "scorecard.json", "build"))
    lookup_path = _require(out_dir, "lookup.csv", "build")
    read_lookup_csv(lookup_path, card.max_total)  # validated as a build artifact
    plan = read_imputation(_require(out_dir, "imputation.json", "build"))

    selected = list(card.variables)
    missing = [v for v in selected if v not in loaded.table.variable_names]
    if missing:
        raise ValidationError(f"scorecard variables not in schema: {missing}")
    cuts = CutoffSpec({v: tuple(c) for v, c in (card.cutoffs or {}).items()})

    test = impute(loaded.table.subset(loaded.split.test), plan) \
        .select_variables(selected)
    test_cat = categorize(test, cuts)
    reports = [evaluate_scores(
        "scorecard", total_scores(card, test_cat), test.outcome,
        B=config.bootstrap_b, alpha=config.alpha, seed=config.bootstrap_seed)]

    if with_pom:
        fit = fit_from_doc(json.loads(
            _require(out_dir, "fit.json", "build").read_text(encoding="utf-8")))
        reports.append(evaluate_scores(
            "pom", linear_predictors(fit, test_cat), test.outcome,
            B=config.bootstrap_b, alpha=config.alpha,
            seed=config.bootstrap_seed))
    if with_forest:
        train = impute(loaded.table.subset(loaded.split.train), plan) \
            .select_variables(selected)
        forest = train_forest(
            train, n_trees=config.n_trees, mtry=config.mtry,
            min_node_size=config.min_node_size, max_depth=config.max_depth,
            seed=config.forest_seed)
        reports.append(evaluate_scores(
            "forest", forest_predict(forest, test).astype(np.float64),
            test.outcome, B=config.bootstrap_b, alpha=config.alpha,
            seed=config.bootstrap_seed))

    write_text(out_dir / "report.json",
               canonical_json([report_to_doc(r) for r in reports]))
    write_report_csv(out_dir / "report.csv", reports)
    record_stage(out_dir, config, "evaluate",
                 inputs={"data": sha256_file(config.data),
                         "schema": sha256_file(config.schema),
                         "splits.csv": sha256_file(out_dir / "splits.csv"),
                         "scorecard.json": sha256_file(out_dir / "scorecard.json"),
                         "lookup.csv": sha256_file(lookup_path),
                         "imputation.json": sha256_file(out_dir / "imputation.json")},
                 outputs=_digest_outputs(out_dir, ["report.json", "report.csv"]))
    return reports
