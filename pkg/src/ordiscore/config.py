"""Pipeline configuration: one JSON document drives every command.

The human-in-the-loop steps (choosing variables after the parsimony plot,
fine-tuning cut-offs) are edits to this document between commands, so a run
is fully described by the config plus the seeds inside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .data import DEFAULT_SPLIT_RATIOS, SPLIT_NAMES
from .errors import ValidationError
from .links import get_link
from .serial import canonical_json, sha256_text


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved settings for every pipeline stage."""

    data: str
    schema: str
    output_dir: str
    split_ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS
    split_seed: int = 0
    reference_split: str = "train"
    n_trees: int = 100
    mtry: int | None = None
    min_node_size: int = 1
    max_depth: int | None = None
    forest_seed: int = 0
    percentiles: tuple[float, ...] = (5.0, 20.0, 80.0, 95.0)
    min_bin_fraction: float = 0.01
    link: str = "logit"
    max_total_target: int | None = 100
    selected_variables: tuple[str, ...] | None = None
    grad_tol: float = 1e-8
    max_iter: int = 100
    bin_width: int = 5
    min_bin_count: int = 20
    bootstrap_b: int = 100
    alpha: float = 0.05
    bootstrap_seed: int = 0
    bootstrap_method: str = "bc"
    max_k: int | None = None
    overrides: str | None = None

    def __post_init__(self):
        ratios = tuple(float(r) for r in self.split_ratios)
        object.__setattr__(self, "split_ratios", ratios)
        if len(ratios) != 3 or any(r <= 0 for r in ratios):
            raise ValidationError("split ratios must be three positive numbers")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ValidationError(f"split ratios must sum to 1, got {sum(ratios)}")
        if self.reference_split not in SPLIT_NAMES:
            raise ValidationError(
                f"imputation reference split must be one of {SPLIT_NAMES}")
        get_link(self.link)
        if self.selected_variables is not None:
            object.__setattr__(self, "selected_variables",
                               tuple(self.selected_variables))
        object.__setattr__(self, "percentiles",
                           tuple(float(p) for p in self.percentiles))


_SECTION_KEYS = {
    "data", "schema", "output_dir", "split", "imputation", "forest",
    "transform", "model", "lookup", "bootstrap", "parsimony", "overrides",
}


def _section(doc: dict, name: str, known: set[str]) -> dict:
    section = doc.get(name, {})
    if not isinstance(section, dict):
        raise ValidationError(f"config section {name!r} must be an object")
    unknown = set(section) - known
    if unknown:
        raise ValidationError(f"config section {name!r}: unknown keys {sorted(unknown)}")
    return section


def config_from_doc(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    unknown = set(doc) - _SECTION_KEYS
    if unknown:
        raise ValidationError(f"config: unknown keys {sorted(unknown)}")
    for key in ("data", "schema", "output_dir"):
        if key not in doc or not isinstance(doc[key], str):
            raise ValidationError(f"config needs a string {key!r} entry")

    split = _section(doc, "split", {"ratios", "seed"})
    imputation = _section(doc, "imputation", {"reference_split"})
    forest = _section(doc, "forest",
                      {"n_trees", "mtry", "min_node_size", "max_depth", "seed"})
    transform = _section(doc, "transform", {"percentiles", "min_bin_fraction"})
    model = _section(doc, "model", {"link", "max_total_target",
                                    "selected_variables", "grad_tol", "max_iter"})
    lookup = _section(doc, "lookup", {"bin_width", "min_bin_count"})
    bootstrap = _section(doc, "bootstrap", {"B", "alpha", "seed", "method"})
    parsimony = _section(doc, "parsimony", {"max_k"})

    selected = model.get("selected_variables")
    try:
        return PipelineConfig(
            data=doc["data"],
            schema=doc["schema"],
            output_dir=doc["output_dir"],
            split_ratios=tuple(split.get("ratios", DEFAULT_SPLIT_RATIOS)),
            split_seed=int(split.get("seed", 0)),
            reference_split=imputation.get("reference_split", "train"),
            n_trees=int(forest.get("n_trees", 100)),
            mtry=None if forest.get("mtry") is None else int(forest["mtry"]),
            min_node_size=int(forest.get("min_node_size", 1)),
            max_depth=None if forest.get("max_depth") is None
            else int(forest["max_depth"]),
            forest_seed=int(forest.get("seed", 0)),
            percentiles=tuple(transform.get("percentiles", (5, 20, 80, 95))),
            min_bin_fraction=float(transform.get("min_bin_fraction", 0.01)),
            link=model.get("link", "logit"),
            max_total_target=None if model.get("max_total_target", 100) is None
            else int(model.get("max_total_target", 100)),
            selected_variables=None if selected is None else tuple(selected),
            grad_tol=float(model.get("grad_tol", 1e-8)),
            max_iter=int(model.get("max_iter", 100)),
            bin_width=int(lookup.get("bin_width", 5)),
            min_bin_count=int(lookup.get("min_bin_count", 20)),
            bootstrap_b=int(bootstrap.get("B", 100)),
            alpha=float(bootstrap.get("alpha", 0.05)),
            bootstrap_seed=int(bootstrap.get("seed", 0)),
            bootstrap_method=bootstrap.get("method", "bc"),
            max_k=None if parsimony.get("max_k") is None
            else int(parsimony["max_k"]),
            overrides=doc.get("overrides"),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed config value: {exc}") from exc


def config_to_doc(config: PipelineConfig) -> dict:
    """Canonical document form (used for hashing, so key order is fixed)."""
    return {
        "data": config.data,
        "schema": config.schema,
        "output_dir": config.output_dir,
        "split": {"ratios": list(config.split_ratios), "seed": config.split_seed},
        "imputation": {"reference_split": config.reference_split},
        "forest": {
            "n_trees": config.n_trees,
            "mtry": config.mtry,
            "min_node_size": config.min_node_size,
            "max_depth": config.max_depth,
            "seed": config.forest_seed,
        },
        "transform": {
            "percentiles": list(config.percentiles),
            "min_bin_fraction": config.min_bin_fraction,
        },
        "model": {
            "link": config.link,
            "max_total_target": config.max_total_target,
            "selected_variables": None if config.selected_variables is None
            else list(config.selected_variables),
            "grad_tol": config.grad_tol,
            "max_iter": config.max_iter,
        },
        "lookup": {"bin_width": config.bin_width,
                   "min_bin_count": config.min_bin_count},
        "bootstrap": {"B": config.bootstrap_b, "alpha": config.alpha,
                      "seed": config.bootstrap_seed,
                      "method": config.bootstrap_method},
        "parsimony": {"max_k": config.max_k},
        "overrides": config.overrides,
    }


def load_config(path, seed_override: int | None = None) -> PipelineConfig:
    """Read and validate a config file; --seed replaces every stage seed."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    config = config_from_doc(doc)
    if seed_override is not None:
        config = replace(config, split_seed=seed_override,
                         forest_seed=seed_override,
                         bootstrap_seed=seed_override)
    for label, p in (("data", config.data), ("schema", config.schema)):
        if not Path(p).exists():
            raise ValidationError(f"config {label} path does not exist: {p}")
    return config


def config_digest(config: PipelineConfig) -> str:
    return sha256_text(canonical_json(config_to_doc(config)))


def write_config(path, config: PipelineConfig) -> None:
    Path(path).write_text(canonical_json(config_to_doc(config)),
                          encoding="utf-8", newline="\n")
