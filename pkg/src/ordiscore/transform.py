"""Percentile-based categorization of continuous variables.

Cut-offs come from training-split percentiles (linear interpolation between
order statistics), get pruned to avoid sparse intervals, and can be replaced
wholesale by user overrides. Categorization maps each continuous value to a
left-closed/right-open interval label; categorical columns pass through.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import KIND_CATEGORICAL, KIND_CONTINUOUS, ColumnSpec, DataTable
from .errors import ValidationError
from .serial import canonical_json, fmt_number, write_text

# A categorized table is an ordinary DataTable whose former continuous columns
# carry interval labels as categories.
CategorizedTable = DataTable

SINGLE_CATEGORY_LABEL = "all"


@dataclass(frozen=True)
class CutoffSpec:
    """Strictly increasing cut-offs per continuous variable; categoricals pass through."""

    cutoffs: dict[str, tuple[float, ...]]
    passthrough: tuple[str, ...] = ()

    def __post_init__(self):
        for name, values in self.cutoffs.items():
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValidationError(
                    f"variable {name!r}: cut-offs must be strictly increasing")
        overlap = set(self.cutoffs) & set(self.passthrough)
        if overlap:
            raise ValidationError(
                f"variables marked both continuous and passthrough: {sorted(overlap)}")

    @property
    def single_category(self) -> tuple[str, ...]:
        """Variables whose cut-off list is empty (they collapse to one interval)."""
        return tuple(n for n, c in self.cutoffs.items() if not c)


def interval_labels(cutoffs: Sequence[float]) -> tuple[str, ...]:
    """Category labels for k cut-offs: "<c1", "[c1, c2)", ..., ">=ck"."""
    if not cutoffs:
        return (SINGLE_CATEGORY_LABEL,)
    text = [fmt_number(c) for c in cutoffs]
    labels = [f"<{text[0]}"]
    labels += [f"[{a}, {b})" for a, b in zip(text, text[1:])]
    labels.append(f">={text[-1]}")
    return tuple(labels)


def _continuous_names(table: DataTable) -> list[str]:
    return [c.name for c in table.schema if c.kind == KIND_CONTINUOUS]


def _check_imputed(table: DataTable, names: Sequence[str], context: str) -> None:
    for name in names:
        if np.isnan(table.columns[name]).any():
            raise ValidationError(
                f"column {name!r} has missing values; impute before {context}")


def derive_cutoffs(train: DataTable,
                   percentiles: Sequence[float] = (5, 20, 80, 95)) -> CutoffSpec:
    """Cut-offs at the given training percentiles, duplicates collapsed.

    Quantiles interpolate linearly between order statistics at position
    h = (n-1)p/100 + 1. A constant column yields no cut-offs and is flagged
    single-category.
    """
    percentiles = tuple(float(p) for p in percentiles)
    if not percentiles:
        raise ValidationError("need at least one percentile")
    if any(b <= a for a, b in zip(percentiles, percentiles[1:])):
        raise ValidationError("percentiles must be strictly increasing")
    if percentiles[0] <= 0 or percentiles[-1] >= 100:
        raise ValidationError("percentiles must lie strictly inside (0, 100)")
    if train.n_rows == 0:
        raise ValidationError("cannot derive cut-offs from an empty table")

    names = _continuous_names(train)
    _check_imputed(train, names, "deriving cut-offs")
    cutoffs = {}
    for name in names:
        values = train.columns[name]
        if values.min() == values.max():
            cutoffs[name] = ()
            continue
        qs = np.quantile(values, np.asarray(percentiles) / 100.0, method="linear")
        cutoffs[name] = tuple(np.unique(qs).tolist())
    passthrough = tuple(c.name for c in train.schema if c.kind == KIND_CATEGORICAL)
    return CutoffSpec(cutoffs, passthrough)


def _interval_counts(values: np.ndarray, cutoffs: Sequence[float]) -> np.ndarray:
    codes = np.searchsorted(np.asarray(cutoffs, dtype=float), values, side="right")
    return np.bincount(codes, minlength=len(cutoffs) + 1)


def prune_cutoffs(spec: CutoffSpec, train: DataTable,
                  min_bin_fraction: float = 0.01) -> CutoffSpec:
    """Greedily merge sparse training intervals by dropping cut-offs.

    While any interval holds fewer than min_bin_fraction of the training rows,
    the sparsest interval (leftmost on ties) is merged with whichever neighbor
    holds fewer rows (left on ties; edge intervals have only one neighbor) by
    removing the cut-off between them.
    """
    if not 0 <= min_bin_fraction < 1:
        raise ValidationError("min_bin_fraction must lie in [0, 1)")
    if train.n_rows == 0:
        raise ValidationError("cannot prune cut-offs against an empty table")
    names = [n for n in spec.cutoffs if n in set(_continuous_names(train))]
    _check_imputed(train, names, "pruning cut-offs")

    n = train.n_rows
    pruned = dict(spec.cutoffs)
    for name in names:
        cuts = list(pruned[name])
        while cuts:
            counts = _interval_counts(train.columns[name], cuts)
            sparse = int(np.argmin(counts))  # leftmost minimum
            if counts[sparse] >= min_bin_fraction * n:
                break
            if sparse == 0:
                drop = 0
            elif sparse == len(cuts):
                drop = len(cuts) - 1
            elif counts[sparse - 1] <= counts[sparse + 1]:
                drop = sparse - 1
            else:
                drop = sparse
            del cuts[drop]
        pruned[name] = tuple(cuts)
    return CutoffSpec(pruned, spec.passthrough)


def categorize(table: DataTable, spec: CutoffSpec) -> CategorizedTable:
    """Replace continuous columns by interval-labeled categorical columns.

    A value equal to a cut-off lands in the interval that has it as lower
    bound (left-closed). An empty cut-off list yields the single category
    "all". Categorical columns pass through unchanged.
    """
    names = _continuous_names(table)
    missing = [n for n in names if n not in spec.cutoffs]
    if missing:
        raise ValidationError(f"no cut-offs for continuous columns: {missing}")
    _check_imputed(table, names, "categorizing")

    new_schema = []
    new_columns = {}
    for col in table.schema:
        if col.kind == KIND_CATEGORICAL:
            new_schema.append(col)
            new_columns[col.name] = table.columns[col.name]
            continue
        cuts = spec.cutoffs[col.name]
        labels = interval_labels(cuts)
        codes = np.searchsorted(np.asarray(cuts, dtype=float),
                                table.columns[col.name], side="right")
        new_schema.append(ColumnSpec(col.name, KIND_CATEGORICAL, labels))
        new_columns[col.name] = codes.astype(np.int64)
    return DataTable(tuple(new_schema), new_columns, table.outcome, table.outcome_name)


def apply_overrides(spec: CutoffSpec,
                    overrides: Mapping[str, Sequence[float]]) -> CutoffSpec:
    """Replace selected variables' cut-offs verbatim; others keep theirs."""
    updated = dict(spec.cutoffs)
    for name, values in overrides.items():
        if name not in spec.cutoffs:
            raise ValidationError(f"override for unknown continuous variable {name!r}")
        values = tuple(float(v) for v in values)
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValidationError(
                f"override for {name!r} must be strictly increasing")
        updated[name] = values
    return CutoffSpec(updated, spec.passthrough)


def write_cutoffs(path, spec: CutoffSpec) -> None:
    """Serialize as JSON: variable name to sorted cut-off array."""
    doc = {name: list(values) for name, values in spec.cutoffs.items()}
    write_text(path, canonical_json(doc))


def read_cutoffs(path, passthrough: Sequence[str] = ()) -> CutoffSpec:
    """Read the JSON cut-off format; also used for override files."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read cut-offs: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cut-off file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("cut-off file must be a JSON object")
    cutoffs = {}
    for name, values in doc.items():
        if not isinstance(values, list):
            raise ValidationError(f"variable {name!r}: cut-offs must be an array")
        cutoffs[name] = tuple(float(v) for v in values)
    spec = CutoffSpec(cutoffs, tuple(passthrough))
    if spec.single_category:
        warnings.warn(
            f"variables with no cut-offs collapse to one category: "
            f"{list(spec.single_category)}", stacklevel=2)
    return spec
