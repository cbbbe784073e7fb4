"""Integer point scorecards and the score-to-probability lookup table.

A positive-coefficient model becomes a paper checklist: coefficients are
normalized by the smallest positive one, rescaled so the attainable maximum
hits a target (default 100), and rounded half-away-from-zero to integer
partial scores. A row's total score is the sum of its matched partials.
The lookup table maps total-score bins to observed training-set outcome
proportions, which is how scores are read as probabilities at the bedside.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import KIND_CATEGORICAL, DataTable
from .errors import ValidationError
from .pom import PomFit
from .serial import canonical_json, fmt_number, write_text

PROB_SUM_TOL_BUILD = 1e-12
# published lookup rows are often rounded to 3 decimals, so the loader is
# forgiving; probabilities are used as stored, never renormalized
PROB_SUM_TOL_LOAD = 5e-3


@dataclass(frozen=True)
class ScoreCard:
    """Per-category integer partial scores plus the provenance to apply them."""

    variables: tuple[str, ...]
    categories: dict[str, tuple[str, ...]]
    points: dict[str, dict[str, int]]
    scale_factor: float
    max_total: int
    outcome_labels: tuple[str, ...]
    cutoffs: dict[str, tuple[float, ...]] | None = None
    fit_digest: str | None = None

    def __post_init__(self):
        for var in self.variables:
            if var not in self.categories or var not in self.points:
                raise ValidationError(f"scorecard is missing entries for {var!r}")
            values = [self.points[var][c] for c in self.categories[var]]
            if any(v < 0 for v in values):
                raise ValidationError(f"negative partial score for {var!r}")
            if min(values) != 0:
                raise ValidationError(
                    f"variable {var!r} has no zero-scored category")
        declared_max = sum(max(self.points[v].values()) for v in self.variables) \
            if self.variables else 0
        if declared_max != self.max_total:
            raise ValidationError(
                f"max_total {self.max_total} != sum of per-variable maxima "
                f"{declared_max}")

    def partial(self, variable: str, category: str) -> int:
        if variable not in self.points:
            raise ValidationError(f"unknown variable {variable!r}")
        try:
            return self.points[variable][category]
        except KeyError:
            raise ValidationError(
                f"category {category!r} not in scorecard for {variable!r}") from None


def _round_half_away(x: float) -> int:
    # half-away-from-zero; all inputs here are >= 0
    return int(math.floor(x + 0.5))


def derive_scorecard(fit: PomFit, max_total_target: int | None = 100) -> ScoreCard:
    """Turn non-negative fitted coefficients into integer partial scores.

    Steps: divide by the smallest strictly positive coefficient (positives
    become >= 1), rescale so the pre-rounding attainable maximum equals
    max_total_target (skipped when None), then round half-away-from-zero.
    scale_factor records the combined multiplier applied to raw coefficients.
    """
    effects = {}
    positives = []
    for var in fit.variables:
        per_cat = {c: fit.effect(var, c) for c in fit.categories[var]}
        if any(v < 0 for v in per_cat.values()):
            bad = min(per_cat, key=per_cat.get)
            raise ValidationError(
                f"negative coefficient for {var!r} / {bad!r}; "
                "re-reference the fit so all coefficients are non-negative")
        positives += [v for v in per_cat.values() if v > 0]
        effects[var] = per_cat
    if not positives:
        raise ValidationError("all coefficients are zero; nothing to score")

    smallest = min(positives)
    pre_max = sum(max(per_cat.values()) for per_cat in effects.values()) / smallest
    rescale = 1.0 if max_total_target is None else max_total_target / pre_max
    scale_factor = rescale / smallest

    points = {
        var: {c: _round_half_away(v * scale_factor) for c, v in per_cat.items()}
        for var, per_cat in effects.items()
    }
    max_total = sum(max(p.values()) for p in points.values())
    return ScoreCard(
        variables=fit.variables,
        categories={v: tuple(fit.categories[v]) for v in fit.variables},
        points=points,
        scale_factor=scale_factor,
        max_total=max_total,
        outcome_labels=fit.outcome_labels,
    )


def total_score(card: ScoreCard, row: Mapping[str, str]) -> int:
    """Sum of partial scores for one categorized row; always in [0, max_total]."""
    total = 0
    for var in card.variables:
        if var not in row:
            raise ValidationError(f"row is missing variable {var!r}")
        total += card.partial(var, row[var])
    assert 0 <= total <= card.max_total
    return total


def total_scores(card: ScoreCard, data: DataTable) -> np.ndarray:
    """Vectorized total scores over a categorized table."""
    totals = np.zeros(data.n_rows, dtype=np.int64)
    for var in card.variables:
        spec = data.spec_for(var)
        if spec.kind != KIND_CATEGORICAL:
            raise ValidationError(f"column {var!r} is not categorized")
        per_code = np.array([card.partial(var, c) for c in spec.categories],
                            dtype=np.int64)
        totals += per_code[data.columns[var]]
    assert totals.size == 0 or (0 <= totals.min() and totals.max() <= card.max_total)
    return totals


# --- lookup table ---------------------------------------------------------------


@dataclass(frozen=True)
class LookupTable:
    """Score bins (lower, upper] (first closed at 0) with training proportions."""

    uppers: tuple[float, ...]
    counts: tuple[int, ...]
    probs: np.ndarray
    outcome_labels: tuple[str, ...]
    max_total: int

    def __post_init__(self):
        if not self.uppers:
            raise ValidationError("lookup table has no bins")
        if any(b <= a for a, b in zip(self.uppers, self.uppers[1:])):
            raise ValidationError("lookup bin edges must be strictly increasing")
        if self.uppers[-1] != self.max_total:
            raise ValidationError("lookup bins must cover [0, max_total]")
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.shape != (len(self.uppers), len(self.outcome_labels)):
            raise ValidationError("lookup probability matrix has the wrong shape")
        if (probs < 0).any():
            raise ValidationError("lookup probabilities must be non-negative")

    @property
    def lowers(self) -> tuple[float, ...]:
        return (0.0,) + self.uppers[:-1]

    def bin_index(self, score: float) -> int:
        if not 0 <= score <= self.max_total:
            raise ValidationError(
                f"score {score} outside the covered range [0, {self.max_total}]")
        return int(np.searchsorted(np.asarray(self.uppers), score, side="left"))


def build_lookup(card: ScoreCard, train: DataTable, bin_width: int = 5,
                 min_bin_count: int = 20) -> LookupTable:
    """Bin training total scores and record per-bin outcome proportions.

    Width-`bin_width` bins start at [0, bin_width] and cover [0, max_total].
    Bins are merged left to right until each group holds at least
    min_bin_count rows; an undersized final group joins its left neighbor,
    which is what produces a wide top bin. A single undersized group stays.
    """
    if bin_width < 1:
        raise ValidationError("bin_width must be >= 1")
    if min_bin_count < 1:
        raise ValidationError("min_bin_count must be >= 1")
    if train.n_rows == 0:
        raise ValidationError("cannot build a lookup table from an empty table")

    scores = total_scores(card, train)
    J = len(card.outcome_labels)
    edges = list(range(bin_width, card.max_total + 1, bin_width))
    if not edges or edges[-1] != card.max_total:
        edges.append(card.max_total)

    bin_of = np.searchsorted(np.asarray(edges), scores, side="left")
    outcome_counts = np.zeros((len(edges), J), dtype=np.int64)
    np.add.at(outcome_counts, (bin_of, train.outcome.values - 1), 1)

    # greedy inward merge: accumulate until the group is big enough
    merged_uppers: list[float] = []
    merged_counts: list[np.ndarray] = []
    acc = np.zeros(J, dtype=np.int64)
    for upper, row in zip(edges, outcome_counts):
        acc = acc + row
        if acc.sum() >= min_bin_count:
            merged_uppers.append(float(upper))
            merged_counts.append(acc)
            acc = np.zeros(J, dtype=np.int64)
    if acc.sum() > 0 or not merged_uppers:
        if merged_uppers:
            merged_counts[-1] = merged_counts[-1] + acc
            merged_uppers[-1] = float(edges[-1])
        else:
            merged_uppers.append(float(edges[-1]))
            merged_counts.append(acc)
    else:
        merged_uppers[-1] = float(edges[-1])

    counts = np.array([c.sum() for c in merged_counts], dtype=np.int64)
    probs = np.stack(merged_counts).astype(np.float64) / counts[:, None]
    assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= PROB_SUM_TOL_BUILD)
    return LookupTable(
        uppers=tuple(merged_uppers),
        counts=tuple(int(c) for c in counts),
        probs=probs,
        outcome_labels=card.outcome_labels,
        max_total=card.max_total,
    )


def predict_probs(card: ScoreCard, lookup: LookupTable,
                  row: Mapping[str, str]) -> np.ndarray:
    """Probability vector of the lookup bin containing the row's total score."""
    return lookup.probs[lookup.bin_index(total_score(card, row))].copy()


# --- serialization ----------------------------------------------------------------


def card_to_doc(card: ScoreCard) -> dict:
    doc = {
        "variables": list(card.variables),
        "categories": {v: list(c) for v, c in card.categories.items()},
        "points": {v: dict(p) for v, p in card.points.items()},
        "scale_factor": card.scale_factor,
        "max_total": card.max_total,
        "outcome_labels": list(card.outcome_labels),
    }
    if card.cutoffs is not None:
        doc["cutoffs"] = {v: list(c) for v, c in card.cutoffs.items()}
    if card.fit_digest is not None:
        doc["fit_digest"] = card.fit_digest
    return doc


def card_from_doc(doc: Mapping) -> ScoreCard:
    try:
        cutoffs = doc.get("cutoffs")
        return ScoreCard(
            variables=tuple(doc["variables"]),
            categories={v: tuple(c) for v, c in doc["categories"].items()},
            points={v: {c: int(s) for c, s in p.items()}
                    for v, p in doc["points"].items()},
            scale_factor=float(doc["scale_factor"]),
            max_total=int(doc["max_total"]),
            outcome_labels=tuple(doc["outcome_labels"]),
            cutoffs=None if cutoffs is None else
            {v: tuple(float(x) for x in c) for v, c in cutoffs.items()},
            fit_digest=doc.get("fit_digest"),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"malformed scorecard document: {exc}") from exc


def write_card_json(path, card: ScoreCard) -> None:
    write_text(path, canonical_json(card_to_doc(card)))


def read_card_json(path) -> ScoreCard:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read scorecard: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scorecard is not valid JSON: {exc}") from exc
    return card_from_doc(doc)


def write_card_csv(path, card: ScoreCard) -> None:
    """The printable checklist: variable, interval, partial_score."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variable", "interval", "partial_score"])
        for var in card.variables:
            for cat in card.categories[var]:
                writer.writerow([var, cat, card.points[var][cat]])


def write_lookup_csv(path, lookup: LookupTable) -> None:
    """Lookup export: bin_lower, bin_upper, one probability column per category, n."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = (["bin_lower", "bin_upper"]
                  + [f"p_{label}" for label in lookup.outcome_labels] + ["n"])
        writer.writerow(header)
        for lower, upper, probs, count in zip(lookup.lowers, lookup.uppers,
                                              lookup.probs, lookup.counts):
            writer.writerow([fmt_number(lower), fmt_number(upper)]
                            + [fmt_number(float(p)) for p in probs]
                            + [count])


def read_lookup_csv(path, max_total: int) -> LookupTable:
    """Load a lookup export; row sums may be off by up to 5e-3 (rounded tables)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if (not header or header[:2] != ["bin_lower", "bin_upper"]
                or header[-1] != "n"):
            raise ValidationError(
                f"{path}: expected header bin_lower,bin_upper,p_...,n")
        labels = tuple(h[2:] for h in header[2:-1])
        if not labels or any(not h.startswith("p_") for h in header[2:-1]):
            raise ValidationError(f"{path}: probability columns must be named p_<label>")
        uppers, counts, probs = [], [], []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValidationError(f"{path}: line {line}: wrong field count")
            uppers.append(float(row[1]))
            vector = [float(x) for x in row[2:-1]]
            if abs(sum(vector) - 1.0) > PROB_SUM_TOL_LOAD:
                raise ValidationError(
                    f"{path}: line {line}: probabilities sum to {sum(vector)}")
            probs.append(vector)
            counts.append(int(row[-1]))
    return LookupTable(
        uppers=tuple(uppers),
        counts=tuple(counts),
        probs=np.asarray(probs),
        outcome_labels=labels,
        max_total=max_total,
    )
