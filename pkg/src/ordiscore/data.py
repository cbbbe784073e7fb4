"""Dataset model and seeded data utilities.

Holds the tabular representation shared by every pipeline stage: schema-driven
CSV ingestion, outcome-stratified splitting, median imputation, and a synthetic
generator that draws ordinal outcomes from a known cumulative-link model.

Continuous columns are float arrays with NaN marking missing cells; categorical
columns are integer code arrays indexing the declared category list. All
operations are pure: they return new tables and never mutate their inputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .links import get_link
from .serial import canonical_json, fmt_number, write_text

KIND_CONTINUOUS = "continuous"
KIND_CATEGORICAL = "categorical"
SPLIT_NAMES = ("train", "validation", "test")
DEFAULT_SPLIT_RATIOS = (0.70, 0.10, 0.20)


@dataclass(frozen=True)
class ColumnSpec:
    """One predictor column: continuous, or categorical with an ordered category list."""

    name: str
    kind: str
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (KIND_CONTINUOUS, KIND_CATEGORICAL):
            raise ValidationError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == KIND_CATEGORICAL:
            if not self.categories:
                raise ValidationError(
                    f"column {self.name!r}: categorical column needs a category list")
            if len(set(self.categories)) != len(self.categories):
                raise ValidationError(f"column {self.name!r}: duplicate categories")
        elif self.categories is not None:
            raise ValidationError(
                f"column {self.name!r}: continuous column must not list categories")


@dataclass(frozen=True)
class Schema:
    """Predictor columns plus the outcome designation, as read from the schema document."""

    columns: tuple[ColumnSpec, ...]
    outcome_name: str
    outcome_labels: tuple[str, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns] + [self.outcome_name]
        if len(set(names)) != len(names):
            raise ValidationError("schema column names must be unique")
        if len(self.outcome_labels) < 2:
            raise ValidationError("outcome needs at least 2 ordered categories")
        if len(set(self.outcome_labels)) != len(self.outcome_labels):
            raise ValidationError("duplicate outcome labels")


@dataclass(frozen=True)
class OrdinalOutcome:
    """Ordered outcome: display labels plus per-row integer values in 1..n_categories."""

    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValidationError("outcome needs at least 2 ordered categories")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("duplicate outcome labels")
        values = np.asarray(self.values, dtype=np.int64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValidationError("outcome values must be one-dimensional")
        if values.size and (values.min() < 1 or values.max() > len(self.labels)):
            raise ValidationError(
                f"outcome values must lie in 1..{len(self.labels)}")

    @property
    def n_categories(self) -> int:
        return len(self.labels)

    def subset(self, indices: np.ndarray) -> "OrdinalOutcome":
        return OrdinalOutcome(self.labels, self.values[indices])


@dataclass(frozen=True)
class DataTable:
    """Immutable column store: schema, per-column arrays, and the ordinal outcome."""

    schema: tuple[ColumnSpec, ...]
    columns: dict[str, np.ndarray]
    outcome: OrdinalOutcome
    outcome_name: str = "outcome"

    def __post_init__(self):
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate column names in schema")
        if set(self.columns) != set(names):
            raise ValidationError("column arrays do not match schema names")
        n = self.outcome.values.shape[0]
        for spec in self.schema:
            col = np.asarray(self.columns[spec.name])
            if col.shape != (n,):
                raise ValidationError(
                    f"column {spec.name!r}: length {col.shape} != outcome length {n}")
            if spec.kind == KIND_CONTINUOUS:
                col = col.astype(np.float64, copy=False)
            else:
                col = col.astype(np.int64, copy=False)
                if col.size and (col.min() < 0 or col.max() >= len(spec.categories)):
                    raise ValidationError(f"column {spec.name!r}: category code out of range")
            self.columns[spec.name] = col

    @property
    def n_rows(self) -> int:
        return self.outcome.values.shape[0]

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.schema)

    def spec_for(self, name: str) -> ColumnSpec:
        for spec in self.schema:
            if spec.name == name:
                return spec
        raise ValidationError(f"unknown column {name!r}")

    def subset(self, indices: np.ndarray) -> "DataTable":
        cols = {name: arr[indices] for name, arr in self.columns.items()}
        return DataTable(self.schema, cols, self.outcome.subset(indices), self.outcome_name)

    def select_variables(self, names: Sequence[str]) -> "DataTable":
        specs = tuple(self.spec_for(n) for n in names)
        cols = {n: self.columns[n] for n in names}
        return DataTable(specs, cols, self.outcome, self.outcome_name)

    def row_labels(self, i: int) -> dict[str, str]:
        """Row i as a {variable: display value} mapping (categorical labels decoded)."""
        out = {}
        for spec in self.schema:
            value = self.columns[spec.name][i]
            if spec.kind == KIND_CATEGORICAL:
                out[spec.name] = spec.categories[int(value)]
            else:
                out[spec.name] = fmt_number(float(value))
        return out


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/validation/test row indices covering the table exactly once."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int | None = None

    def named(self) -> dict[str, np.ndarray]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


@dataclass(frozen=True)
class ImputationPlan:
    """Per-continuous-column fill values, medians of the designated reference split."""

    fill: dict[str, float]
    reference_split: str


@dataclass(frozen=True)
class PredictorSpec:
    """One synthetic predictor: distribution plus its true model coefficient."""

    name: str
    dist: str = "normal"
    params: tuple[float, float] = (0.0, 1.0)
    beta: float = 0.0

    def __post_init__(self):
        if self.dist not in ("normal", "uniform"):
            raise ValidationError(f"predictor {self.name!r}: unknown dist {self.dist!r}")
        lo, hi = self.params
        if self.dist == "normal" and hi <= 0:
            raise ValidationError(f"predictor {self.name!r}: sd must be > 0")
        if self.dist == "uniform" and hi <= lo:
            raise ValidationError(f"predictor {self.name!r}: need low < high")


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings: row count, true intercepts/coefficients, link, seed."""

    n: int
    theta: tuple[float, ...]
    predictors: tuple[PredictorSpec, ...] = ()
    noise_count: int = 0
    link: str = "logit"
    seed: int = 0
    outcome_name: str = "outcome"

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("synthetic spec: n must be >= 1")
        if len(self.theta) < 1:
            raise ValidationError("synthetic spec: need at least one intercept")
        if any(b <= a for a, b in zip(self.theta, self.theta[1:])):
            raise ValidationError("synthetic spec: theta must be strictly increasing")
        if self.noise_count < 0:
            raise ValidationError("synthetic spec: noise_count must be >= 0")
        names = [p.name for p in self.predictors]
        names += [f"noise_{i + 1}" for i in range(self.noise_count)]
        if len(set(names)) != len(names):
            raise ValidationError("synthetic spec: duplicate predictor names")
        get_link(self.link)


# --- splitting ---------------------------------------------------------------


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    # largest-remainder apportionment; remainder ties go to the earlier split
    exact = [n * r for r in ratios]
    base = [math.floor(e) for e in exact]
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[: n - sum(base)]:
        base[i] += 1
    return base


def stratified_split(table: DataTable,
                     ratios: Sequence[float] = DEFAULT_SPLIT_RATIOS,
                     seed: int = 0) -> SplitIndices:
    """Split rows into train/validation/test preserving outcome proportions.

    Within each outcome category the rows are shuffled (seeded) and apportioned
    by largest remainder, so per-category split counts match the ratios within
    one row and the three splits partition the table exactly.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValidationError("expected exactly three split ratios")
    if any(r <= 0 for r in ratios):
        raise ValidationError("split ratios must be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"split ratios must sum to 1, got {sum(ratios)}")

    rng = np.random.default_rng(seed)
    values = table.outcome.values
    parts: list[list[np.ndarray]] = [[], [], []]
    for category in range(1, table.outcome.n_categories + 1):
        idx = np.flatnonzero(values == category)
        if idx.size == 0:
            continue
        if idx.size < 3:
            raise ValidationError(
                f"outcome category {category} has {idx.size} rows; "
                "need at least one per split")
        perm = rng.permutation(idx)
        counts = _apportion(idx.size, ratios)
        start = 0
        for part, count in zip(parts, counts):
            part.append(perm[start:start + count])
            start += count
    train, validation, test = (
        np.sort(np.concatenate(p)) if p else np.empty(0, dtype=np.int64) for p in parts)
    return SplitIndices(train, validation, test, seed)


# --- imputation ---------------------------------------------------------------


def plan_imputation(table: DataTable, split: SplitIndices,
                    reference_split: str = "train") -> ImputationPlan:
    """Median fill values computed on the chosen reference split.

    Every continuous column gets an entry (even without missing cells, so future
    scoring rows can be filled). Even-count medians are the mean of the two
    middle order statistics.
    """
    if reference_split not in SPLIT_NAMES:
        raise ValidationError(f"unknown reference split {reference_split!r}")
    ref = split.named()[reference_split]
    if ref.size == 0:
        raise ValidationError(f"reference split {reference_split!r} is empty")
    fill = {}
    for spec in table.schema:
        if spec.kind != KIND_CONTINUOUS:
            continue
        values = table.columns[spec.name][ref]
        observed = values[~np.isnan(values)]
        if observed.size == 0:
            raise ValidationError(
                f"column {spec.name!r}: no observed values in the "
                f"{reference_split} split to take a median from")
        fill[spec.name] = float(np.median(observed))
    return ImputationPlan(fill, reference_split)


def impute(table: DataTable, plan: ImputationPlan) -> DataTable:
    """Fill missing continuous cells from the plan; observed cells pass through."""
    cols = {}
    for spec in table.schema:
        values = table.columns[spec.name]
        if spec.kind != KIND_CONTINUOUS:
            cols[spec.name] = values
            continue
        mask = np.isnan(values)
        if not mask.any():
            cols[spec.name] = values
            continue
        if spec.name not in plan.fill:
            raise ValidationError(
                f"column {spec.name!r} has missing cells but no imputation plan entry")
        filled = values.copy()
        filled[mask] = plan.fill[spec.name]
        cols[spec.name] = filled
    return DataTable(table.schema, cols, table.outcome, table.outcome_name)


# --- synthetic data -----------------------------------------------------------


def generate_synthetic(spec: SyntheticSpec) -> DataTable:
    """Simulate an ordinal-outcome dataset from a known cumulative-link model.

    Each row's outcome is drawn from the category probabilities implied by
    F(theta_j - x'beta) under the spec link. Deterministic given the seed: a
    single generator stream is consumed in declared predictor order, noise
    variables next, then one uniform draw per row.
    """
    rng = np.random.default_rng(spec.seed)
    link = get_link(spec.link)
    n = spec.n

    names, betas, columns = [], [], {}
    for pred in spec.predictors:
        lo, hi = pred.params
        if pred.dist == "normal":
            values = rng.normal(lo, hi, size=n)
        else:
            values = rng.uniform(lo, hi, size=n)
        names.append(pred.name)
        betas.append(pred.beta)
        columns[pred.name] = values
    for i in range(spec.noise_count):
        name = f"noise_{i + 1}"
        names.append(name)
        betas.append(0.0)
        columns[name] = rng.normal(0.0, 1.0, size=n)

    eta = np.zeros(n)
    for name, beta in zip(names, betas):
        if beta != 0.0:
            eta += beta * columns[name]

    theta = np.asarray(spec.theta, dtype=float)
    cumulative = link.cdf(theta[None, :] - eta[:, None])  # (n, J-1)
    u = rng.random(n)
    values = 1 + (u[:, None] > cumulative).sum(axis=1)

    n_categories = len(spec.theta) + 1
    labels = tuple(str(j) for j in range(1, n_categories + 1))
    schema = tuple(ColumnSpec(name, KIND_CONTINUOUS) for name in names)
    outcome = OrdinalOutcome(labels, values)
    return DataTable(schema, columns, outcome, spec.outcome_name)


def read_synthetic_spec(path) -> SyntheticSpec:
    """Parse a generator spec document (JSON)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read synthetic spec: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"synthetic spec is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("synthetic spec must be a JSON object")
    known = {"n", "theta", "predictors", "noise_count", "link", "seed", "outcome_name"}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"synthetic spec: unknown keys {sorted(unknown)}")
    try:
        predictors = tuple(
            PredictorSpec(p["name"], p.get("dist", "normal"),
                          tuple(p.get("params", (0.0, 1.0))), float(p.get("beta", 0.0)))
            for p in doc.get("predictors", ()))
        return SyntheticSpec(
            n=int(doc["n"]),
            theta=tuple(float(t) for t in doc["theta"]),
            predictors=predictors,
            noise_count=int(doc.get("noise_count", 0)),
            link=doc.get("link", "logit"),
            seed=int(doc.get("seed", 0)),
            outcome_name=doc.get("outcome_name", "outcome"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed synthetic spec: {exc}") from exc


# --- schema and CSV I/O -------------------------------------------------------


def read_schema(path) -> Schema:
    """Parse the schema document (JSON: column kinds, categories, outcome)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read schema: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"schema is not valid JSON: {exc}") from exc
    try:
        columns = tuple(
            ColumnSpec(c["name"], c["kind"],
                       tuple(c["categories"]) if "categories" in c else None)
            for c in doc["columns"])
        outcome = doc["outcome"]
        return Schema(columns, outcome["name"], tuple(outcome["labels"]))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed schema document: {exc}") from exc


def write_schema(path, schema: Schema) -> None:
    doc = {
        "columns": [
            {"name": c.name, "kind": c.kind}
            if c.categories is None else
            {"name": c.name, "kind": c.kind, "categories": list(c.categories)}
            for c in schema.columns
        ],
        "outcome": {"name": schema.outcome_name, "labels": list(schema.outcome_labels)},
    }
    write_text(path, canonical_json(doc))


def table_schema(table: DataTable) -> Schema:
    return Schema(table.schema, table.outcome_name, table.outcome.labels)


def load_csv(path, schema: Schema) -> DataTable:
    """Read a UTF-8, comma-delimited, headered CSV against the schema.

    Empty string marks a missing continuous cell. Missing categorical or
    outcome cells, unknown categories, and unparseable numbers are errors
    naming the row and column.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        expected = {c.name for c in schema.columns} | {schema.outcome_name}
        if len(set(header)) != len(header):
            raise ValidationError(f"{path}: duplicate header columns")
        if set(header) != expected:
            missing = sorted(expected - set(header))
            extra = sorted(set(header) - expected)
            raise ValidationError(
                f"{path}: header does not match schema"
                + (f"; missing {missing}" if missing else "")
                + (f"; unknown {extra}" if extra else ""))
        rows = list(reader)

    n = len(rows)
    by_name = {c.name: c for c in schema.columns}
    position = {name: header.index(name) for name in expected}
    columns: dict[str, np.ndarray] = {}
    for name, spec in by_name.items():
        cells = [row[position[name]] for row in rows]
        if spec.kind == KIND_CONTINUOUS:
            values = np.empty(n, dtype=np.float64)
            for i, cell in enumerate(cells):
                if cell == "":
                    values[i] = np.nan
                else:
                    try:
                        values[i] = float(cell)
                    except ValueError:
                        raise ValidationError(
                            f"{path}: row {i + 1}, column {name!r}: "
                            f"not a number: {cell!r}") from None
        else:
            code = {c: k for k, c in enumerate(spec.categories)}
            values = np.empty(n, dtype=np.int64)
            for i, cell in enumerate(cells):
                if cell not in code:
                    raise ValidationError(
                        f"{path}: row {i + 1}, column {name!r}: "
                        f"value {cell!r} outside declared categories")
                values[i] = code[cell]
        columns[name] = values

    label_to_value = {lab: j + 1 for j, lab in enumerate(schema.outcome_labels)}
    J = len(schema.outcome_labels)
    outcome_values = np.empty(n, dtype=np.int64)
    pos = position[schema.outcome_name]
    for i, row in enumerate(rows):
        cell = row[pos]
        if cell in label_to_value:
            outcome_values[i] = label_to_value[cell]
        else:
            try:
                value = int(cell)
            except ValueError:
                value = 0
            if not 1 <= value <= J:
                raise ValidationError(
                    f"{path}: row {i + 1}, column {schema.outcome_name!r}: "
                    f"cannot interpret outcome {cell!r}")
            outcome_values[i] = value

    outcome = OrdinalOutcome(schema.outcome_labels, outcome_values)
    return DataTable(schema.columns, columns, outcome, schema.outcome_name)


def write_csv(path, table: DataTable) -> None:
    """Write a table back out in schema order, outcome column last, labels decoded."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([c.name for c in table.schema] + [table.outcome_name])
        labels = table.outcome.labels
        for i in range(table.n_rows):
            row = []
            for spec in table.schema:
                value = table.columns[spec.name][i]
                if spec.kind == KIND_CATEGORICAL:
                    row.append(spec.categories[int(value)])
                else:
                    row.append(fmt_number(float(value)))
            row.append(labels[table.outcome.values[i] - 1])
            writer.writerow(row)


def write_splits(path, split: SplitIndices) -> None:
    """Persist split assignments as CSV (row_id, split), sorted by row id."""
    pairs = []
    for name, idx in split.named().items():
        pairs.extend((int(i), name) for i in idx)
    pairs.sort()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "split"])
        writer.writerows(pairs)


def read_splits(path, n_rows: int) -> SplitIndices:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    buckets: dict[str, list[int]] = {name: [] for name in SPLIT_NAMES}
    seen = np.zeros(n_rows, dtype=bool)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row_id", "split"]:
            raise ValidationError(f"{path}: expected header row_id,split")
        for row_id_text, name in reader:
            row_id = int(row_id_text)
            if name not in buckets:
                raise ValidationError(f"{path}: unknown split name {name!r}")
            if not 0 <= row_id < n_rows:
                raise ValidationError(f"{path}: row id {row_id} out of range")
            if seen[row_id]:
                raise ValidationError(f"{path}: row id {row_id} listed twice")
            seen[row_id] = True
            buckets[name].append(row_id)
    if not seen.all():
        raise ValidationError(f"{path}: split does not cover every row of the dataset")
    return SplitIndices(*(np.asarray(sorted(buckets[n]), dtype=np.int64)
                          for n in SPLIT_NAMES))
