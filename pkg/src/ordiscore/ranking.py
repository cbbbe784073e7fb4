"""Random-forest variable ranking and the forest comparator predictor.

The forest is a plain multiclass Gini forest (outcome ordering deliberately
ignored): 100 trees by default, each on a bootstrap resample, choosing among
floor(sqrt(p)) candidate variables per split. Importance is the total
count-weighted Gini decrease credited to each variable across all splits,
divided by the number of trees; ties are broken by schema order. Everything
is deterministic given the seed: tree t consumes its own stream derived from
(seed, t), and trees are reduced in index order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._treebuild import _grow_tree, _tree_votes
from .data import KIND_CATEGORICAL, KIND_CONTINUOUS, DataTable
from .errors import ValidationError

MAX_CATEGORIES = 64  # categorical splits are stored as uint64 bit masks


@dataclass(frozen=True)
class DecisionTree:
    """One grown tree: flat node arrays plus in-bag multiplicities."""

    feature: np.ndarray
    threshold: np.ndarray
    cat_mask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    inbag: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]


@dataclass(frozen=True)
class Forest:
    """A trained forest plus everything needed to score new tables."""

    trees: tuple[DecisionTree, ...]
    variables: tuple[str, ...]
    kinds: np.ndarray
    n_cats: np.ndarray
    outcome_labels: tuple[str, ...]
    n_trees: int
    mtry: int
    min_node_size: int
    max_depth: int | None
    seed: int
    importance: np.ndarray

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("a forest needs at least one tree")
        if (self.importance < 0).any():
            raise ValidationError("negative accumulated impurity decrease")


@dataclass(frozen=True)
class ImportanceRanking:
    """Variables ordered by descending importance (schema order on ties)."""

    entries: tuple[tuple[str, float], ...]

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)


def _design_matrix(table: DataTable):
    """Float matrix view of the table: categorical codes stored as floats."""
    columns = []
    kinds = np.zeros(len(table.schema), dtype=np.int8)
    n_cats = np.zeros(len(table.schema), dtype=np.int64)
    for j, spec in enumerate(table.schema):
        values = table.columns[spec.name]
        if spec.kind == KIND_CONTINUOUS:
            if np.isnan(values).any():
                raise ValidationError(
                    f"column {spec.name!r} has missing values; impute first")
            columns.append(values.astype(np.float64, copy=False))
        else:
            if len(spec.categories) > MAX_CATEGORIES:
                raise ValidationError(
                    f"column {spec.name!r} has {len(spec.categories)} categories; "
                    f"the forest supports at most {MAX_CATEGORIES}")
            kinds[j] = 1
            n_cats[j] = len(spec.categories)
            columns.append(values.astype(np.float64))
    X = np.column_stack(columns) if columns else np.zeros((table.n_rows, 0))
    return np.ascontiguousarray(X), kinds, n_cats


def train_forest(train: DataTable, n_trees: int = 100, mtry: int | None = None,
                 min_node_size: int = 1, max_depth: int | None = None,
                 seed: int = 0) -> Forest:
    """Grow a seeded Gini forest on the training table."""
    if train.n_rows == 0:
        raise ValidationError("cannot train a forest on an empty table")
    if not train.schema:
        raise ValidationError("cannot train a forest without predictors")
    if n_trees < 1:
        raise ValidationError("n_trees must be >= 1")
    if min_node_size < 1:
        raise ValidationError("min_node_size must be >= 1")
    J = train.outcome.n_categories
    observed = np.bincount(train.outcome.values, minlength=J + 1)[1:]
    if (observed > 0).sum() < 2:
        raise ValidationError("outcome has a single category; nothing to rank")
    if (observed == 0).any():
        missing = [train.outcome.labels[j] for j in range(J) if observed[j] == 0]
        raise ValidationError(f"outcome categories absent from training data: {missing}")

    p = len(train.schema)
    if mtry is None:
        mtry = max(1, int(math.floor(math.sqrt(p))))
    if not 1 <= mtry <= p:
        raise ValidationError(f"mtry must lie in 1..{p}")

    X, kinds, n_cats = _design_matrix(train)
    y = train.outcome.values
    n = train.n_rows
    max_nodes = 2 * n + 1
    depth_sentinel = -1 if max_depth is None else int(max_depth)
    tree_seeds = np.random.SeedSequence(seed).generate_state(n_trees, np.uint64)

    trees = []
    importance = np.zeros(p, dtype=np.float64)
    for t in range(n_trees):
        feature = np.empty(max_nodes, dtype=np.int64)
        threshold = np.zeros(max_nodes, dtype=np.float64)
        cat_mask = np.zeros(max_nodes, dtype=np.uint64)
        left = np.zeros(max_nodes, dtype=np.int64)
        right = np.zeros(max_nodes, dtype=np.int64)
        counts = np.zeros((max_nodes, J), dtype=np.int64)
        inbag = np.zeros(n, dtype=np.int64)
        tree_importance = np.zeros(p, dtype=np.float64)
        n_nodes = _grow_tree(X, kinds, n_cats, y, J, mtry, min_node_size,
                             depth_sentinel, tree_seeds[t], feature, threshold,
                             cat_mask, left, right, counts, inbag,
                             tree_importance)
        importance += tree_importance
        trees.append(DecisionTree(
            feature=feature[:n_nodes].copy(),
            threshold=threshold[:n_nodes].copy(),
            cat_mask=cat_mask[:n_nodes].copy(),
            left=left[:n_nodes].copy(),
            right=right[:n_nodes].copy(),
            counts=counts[:n_nodes].copy(),
            inbag=inbag,
        ))

    return Forest(
        trees=tuple(trees),
        variables=train.variable_names,
        kinds=kinds,
        n_cats=n_cats,
        outcome_labels=train.outcome.labels,
        n_trees=n_trees,
        mtry=mtry,
        min_node_size=min_node_size,
        max_depth=max_depth,
        seed=seed,
        importance=importance / n_trees,
    )


def variable_importance(forest: Forest) -> ImportanceRanking:
    """Descending mean Gini decrease; equal values keep schema order."""
    order = np.argsort(-forest.importance, kind="stable")
    entries = tuple((forest.variables[i], float(forest.importance[i]))
                    for i in order)
    return ImportanceRanking(entries)


def forest_predict(forest: Forest, table: DataTable) -> np.ndarray:
    """Majority vote over trees, ties toward the lower category; values 1..J."""
    if table.variable_names != forest.variables:
        raise ValidationError(
            "table columns do not match the forest's training schema")
    for spec in table.schema:
        if spec.kind == KIND_CATEGORICAL:
            if len(spec.categories) > MAX_CATEGORIES:
                raise ValidationError(
                    f"column {spec.name!r} has too many categories")
    X, kinds, _ = _design_matrix(table)
    if not np.array_equal(kinds, forest.kinds):
        raise ValidationError("column kinds do not match the training schema")
    J = len(forest.outcome_labels)
    votes = np.zeros((table.n_rows, J), dtype=np.int64)
    for tree in forest.trees:
        _tree_votes(X, kinds, tree.feature, tree.threshold, tree.cat_mask,
                    tree.left, tree.right, tree.counts, votes)
    return np.argmax(votes, axis=1).astype(np.int64) + 1


def rank_variables(train: DataTable, n_trees: int = 100, mtry: int | None = None,
                   min_node_size: int = 1, max_depth: int | None = None,
                   seed: int = 0) -> ImportanceRanking:
    """Convenience: train a forest and return its importance ranking."""
    return variable_importance(train_forest(
        train, n_trees=n_trees, mtry=mtry, min_node_size=min_node_size,
        max_depth=max_depth, seed=seed))


def write_ranking(path, ranking: ImportanceRanking) -> None:
    """Persist as CSV (rank, variable, importance)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "variable", "importance"])
        for rank, (name, value) in enumerate(ranking.entries, start=1):
            writer.writerow([rank, name, repr(value)])


def read_ranking(path) -> ImportanceRanking:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["rank", "variable", "importance"]:
            raise ValidationError(f"{path}: expected header rank,variable,importance")
        for expected_rank, row in enumerate(reader, start=1):
            if len(row) != 3 or int(row[0]) != expected_rank:
                raise ValidationError(f"{path}: malformed ranking row {row}")
            entries.append((row[1], float(row[2])))
    if not entries:
        raise ValidationError(f"{path}: ranking is empty")
    return ImportanceRanking(tuple(entries))
