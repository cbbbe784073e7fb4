"""Ordinal performance metrics, bootstrap intervals, and the parsimony curve.

mAUC averages the J-1 dichotomized AUCs (Y <= j vs Y > j); the generalized
c-index is the proportion of concordant pairs among all pairs with differing
outcomes, counting score ties as half. Both use O(n log n) rank arithmetic;
brute-force pair enumeration lives in the test suite as the oracle.

Intervals are bias-corrected (BC) percentile bootstrap: acceleration is fixed
at zero and the bias constant z0 counts resampled statistics strictly below
the point estimate. Resample b draws its indices from an independent stream
seeded by (seed, b), so runs are reproducible and resamples parallelizable.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import rankdata

from .config import PipelineConfig
from .data import DataTable, OrdinalOutcome
from .errors import ValidationError
from .pom import fit_pom, linear_predictors, refit_positive
from .scorecard import derive_scorecard, total_scores
from .transform import categorize, derive_cutoffs, prune_cutoffs


def binary_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError("scores and labels must be equal-length vectors")
    positive = labels.astype(bool)
    n_pos = int(positive.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("both classes must be present to compute an AUC")
    ranks = rankdata(scores, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class MeanAucResult:
    """mAUC plus the per-split AUCs behind it; skipped splits lacked a class."""

    value: float
    per_split: dict[int, float]
    skipped: tuple[int, ...] = ()

    def __float__(self) -> float:
        return self.value


def mean_auc(scores, outcomes: OrdinalOutcome) -> MeanAucResult:
    """Mean over j of AUC(scores, Y > j); single-class splits are skipped."""
    y = outcomes.values
    per_split = {}
    skipped = []
    for j in range(1, outcomes.n_categories):
        above = y > j
        if not above.any() or above.all():
            skipped.append(j)
            continue
        per_split[j] = binary_auc(scores, above)
    if not per_split:
        raise ValidationError("no dichotomization has both classes present")
    if skipped:
        warnings.warn(
            f"skipping single-class dichotomizations at j={skipped}", stacklevel=2)
    value = float(np.mean(list(per_split.values())))
    return MeanAucResult(value, per_split, tuple(skipped))


def generalized_c_index(scores, outcomes: OrdinalOutcome) -> float:
    """(C + 0.5 T) / (C + D + T) over pairs with different outcomes."""
    scores = np.asarray(scores, dtype=np.float64)
    y = outcomes.values
    if scores.shape != y.shape:
        raise ValidationError("scores and outcomes must be equal-length")
    n = y.shape[0]
    J = outcomes.n_categories
    class_totals = np.bincount(y, minlength=J + 1)[1:]
    if (class_totals > 0).sum() < 2:
        raise ValidationError("all outcomes identical; no comparable pairs")
    total_pairs = (n * n - int((class_totals.astype(np.int64) ** 2).sum())) // 2

    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_y = y[order]

    concordant = 0
    tied = 0
    seen = np.zeros(J + 1, dtype=np.int64)  # class counts at strictly lower scores
    i = 0
    while i < n:
        k = i
        while k < n and sorted_scores[k] == sorted_scores[i]:
            k += 1
        group = sorted_y[i:k]
        group_counts = np.bincount(group, minlength=J + 1)
        g = k - i
        # ties: within-group pairs with different outcomes
        tied += (g * g - int((group_counts.astype(np.int64) ** 2).sum())) // 2
        # concordant: lower-score rows with strictly lower outcome
        cum = np.cumsum(seen)
        for c in range(1, J + 1):
            if group_counts[c]:
                concordant += int(group_counts[c]) * int(cum[c - 1])
        seen += group_counts
        i = k
    return float((concordant + 0.5 * tied) / total_pairs)


def mauc_value(scores, outcomes: OrdinalOutcome) -> float:
    """mean_auc as a plain float, for use as a bootstrap metric."""
    return mean_auc(scores, outcomes).value


# --- bootstrap ------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapCI:
    """BC percentile interval; the point estimate may fall outside in edge cases."""

    point: float
    lower: float
    upper: float
    B: int
    alpha: float
    z0: float
    seed: int
    n_used: int

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValidationError("interval endpoints out of order")


def percentile_interval(samples: np.ndarray, alpha: float) -> tuple[float, float]:
    """Plain equal-tail percentile interval of the bootstrap distribution."""
    lo, hi = np.quantile(samples, [alpha / 2.0, 1.0 - alpha / 2.0],
                         method="linear")
    return float(lo), float(hi)


def bc_interval(samples: np.ndarray, point: float,
                alpha: float) -> tuple[float, float, float]:
    """Bias-corrected endpoints and z0; reduces to percentile when z0 = 0."""
    B = samples.shape[0]
    below = float(np.count_nonzero(samples < point))
    frac = min(max(below / B, 0.5 / B), 1.0 - 0.5 / B)
    z0 = float(ndtri(frac))
    z_crit = float(ndtri(1.0 - alpha / 2.0))
    q_lo = float(ndtr(2.0 * z0 - z_crit))
    q_hi = float(ndtr(2.0 * z0 + z_crit))
    lo, hi = np.quantile(samples, [q_lo, q_hi], method="linear")
    return float(lo), float(hi), z0


def bootstrap_ci(metric: Callable[[np.ndarray, OrdinalOutcome], float],
                 scores, outcomes: OrdinalOutcome, B: int = 100,
                 alpha: float = 0.05, seed: int = 0,
                 method: str = "bc") -> BootstrapCI:
    """Bias-corrected bootstrap interval for metric(scores, outcomes).

    Resample b uses rng(seed, b).integers(0, n, n) as its index draw;
    degenerate resamples (the metric raises a validation error) are redrawn
    from the same stream up to 10 times, then skipped with a warning.
    """
    if method == "bca":
        raise NotImplementedError(
            "BCa (jackknife acceleration) is not implemented; use method='bc'")
    if method != "bc":
        raise ValidationError(f"unknown bootstrap method {method!r}")
    if B < 2:
        raise ValidationError("bootstrap needs B >= 2 resamples")
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if n == 0:
        raise ValidationError("cannot bootstrap an empty sample")
    point = float(metric(scores, outcomes))

    stats = []
    skipped = 0
    for b in range(B):
        rng = np.random.default_rng([seed, b])
        value = None
        for _ in range(11):
            idx = rng.integers(0, n, n)
            try:
                value = float(metric(scores[idx], outcomes.subset(idx)))
                break
            except ValidationError:
                value = None
        if value is None:
            skipped += 1
        else:
            stats.append(value)
    if skipped:
        warnings.warn(f"skipped {skipped} degenerate bootstrap resamples",
                      stacklevel=2)
    if not stats:
        raise ValidationError("every bootstrap resample was degenerate")

    samples = np.asarray(stats)
    lo, hi, z0 = bc_interval(samples, point, alpha)
    return BootstrapCI(point=point, lower=lo, upper=hi, B=B, alpha=alpha,
                       z0=z0, seed=seed, n_used=len(stats))


# --- parsimony curve --------------------------------------------------------------


@dataclass(frozen=True)
class ParsimonyPoint:
    k: int
    variable: str
    mauc: float
    converged: bool


@dataclass(frozen=True)
class ParsimonyCurve:
    """Validation mAUC of the k-variable scorecard, k = 1..K in ranking order."""

    points: tuple[ParsimonyPoint, ...]

    def __post_init__(self):
        for i, pt in enumerate(self.points, start=1):
            if pt.k != i:
                raise ValidationError("parsimony points must run k = 1..K")

    def gain(self, k_from: int, k_to: int) -> float:
        return self.points[k_to - 1].mauc - self.points[k_from - 1].mauc


def parsimony_curve(ranking: Sequence[str], train: DataTable,
                    validation: DataTable,
                    config: PipelineConfig) -> ParsimonyCurve:
    """Grow the model one ranked variable at a time and score each size.

    Each k repeats the scorecard path on the top-k variables: derive and prune
    cut-offs on train, categorize, fit, re-reference positive, derive the
    integer card, then evaluate its total scores on the validation split.
    Non-converged fits are recorded with converged=False alongside the mAUC
    they achieved.
    """
    if not ranking:
        raise ValidationError("ranking must contain at least one variable")
    points = []
    for k in range(1, len(ranking) + 1):
        selected = list(ranking[:k])
        train_k = train.select_variables(selected)
        valid_k = validation.select_variables(selected)
        cuts = prune_cutoffs(
            derive_cutoffs(train_k, config.percentiles),
            train_k, config.min_bin_fraction)
        train_cat = categorize(train_k, cuts)
        valid_cat = categorize(valid_k, cuts)
        fit = fit_pom(train_cat, link=config.link, grad_tol=config.grad_tol,
                      max_iter=config.max_iter)
        if fit.converged:
            positive = refit_positive(fit, train_cat,
                                      grad_tol=config.grad_tol,
                                      max_iter=config.max_iter)
            card = derive_scorecard(positive, config.max_total_target)
            scores = total_scores(card, valid_cat)
        else:
            # unpolished coefficients can be negative, which the card
            # derivation rejects; rank by the linear predictor instead
            scores = linear_predictors(fit, valid_cat)
        value = mean_auc(scores, validation.outcome).value
        points.append(ParsimonyPoint(k=k, variable=ranking[k - 1], mauc=value,
                                     converged=fit.converged))
    return ParsimonyCurve(tuple(points))


def write_parsimony_csv(path, curve: ParsimonyCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "variable", "mauc", "converged"])
        for pt in curve.points:
            writer.writerow([pt.k, pt.variable, repr(pt.mauc),
                             str(pt.converged).lower()])


def parsimony_svg(curve: ParsimonyCurve) -> str:
    """Minimal self-contained line plot of the curve (decoration, not contract)."""
    width, height, margin = 640, 400, 60
    ks = [pt.k for pt in curve.points]
    vals = [pt.mauc for pt in curve.points]
    lo = min(0.5, min(vals))
    hi = max(1.0, max(vals))
    span_x = max(ks) - min(ks) or 1
    span_y = hi - lo or 1.0

    def sx(k):
        return margin + (k - min(ks)) / span_x * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - lo) / span_y * (height - 2 * margin)

    pts = " ".join(f"{sx(k):.1f},{sy(v):.1f}" for k, v in zip(ks, vals))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>',
    ]
    for k, v in zip(ks, vals):
        parts.append(f'<circle cx="{sx(k):.1f}" cy="{sy(v):.1f}" r="3" '
                     'fill="#1f77b4"/>')
        parts.append(f'<text x="{sx(k):.1f}" y="{height - margin + 18}" '
                     f'font-size="11" text-anchor="middle">{k}</text>')
    for tick in (lo, (lo + hi) / 2, hi):
        parts.append(f'<text x="{margin - 8}" y="{sy(tick) + 4:.1f}" '
                     f'font-size="11" text-anchor="end">{tick:.2f}</text>')
    parts.append(f'<text x="{width / 2}" y="{height - 18}" font-size="13" '
                 'text-anchor="middle">number of top-ranked variables</text>')
    parts.append(f'<text x="18" y="{height / 2}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 18 {height / 2})">'
                 'validation mAUC</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- evaluation report -------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    """Test-set metrics with intervals for one model row (Table-3 style)."""

    model: str
    n: int
    mauc: BootstrapCI
    c_index: BootstrapCI
    per_split_auc: dict[int, float]

    def __post_init__(self):
        for ci in (self.mauc, self.c_index):
            if not 0.0 <= ci.point <= 1.0:
                raise ValidationError("metrics must lie in [0, 1]")


def evaluate_scores(model: str, scores, outcomes: OrdinalOutcome, B: int = 100,
                    alpha: float = 0.05, seed: int = 0) -> EvalReport:
    """mAUC and generalized c-index with BC bootstrap intervals."""
    detail = mean_auc(scores, outcomes)
    return EvalReport(
        model=model,
        n=int(np.asarray(scores).shape[0]),
        mauc=bootstrap_ci(mauc_value, scores, outcomes, B=B, alpha=alpha,
                          seed=seed),
        c_index=bootstrap_ci(generalized_c_index, scores, outcomes, B=B,
                             alpha=alpha, seed=seed),
        per_split_auc=detail.per_split,
    )


def report_to_doc(report: EvalReport) -> dict:
    def ci_doc(ci: BootstrapCI) -> dict:
        return {"point": ci.point, "lower": ci.lower, "upper": ci.upper,
                "B": ci.B, "alpha": ci.alpha, "z0": ci.z0, "seed": ci.seed,
                "n_used": ci.n_used}

    return {
        "model": report.model,
        "n": report.n,
        "mauc": ci_doc(report.mauc),
        "c_index": ci_doc(report.c_index),
        "per_split_auc": {str(j): v for j, v in report.per_split_auc.items()},
    }


def write_report_csv(path, reports: Sequence[EvalReport]) -> None:
    """Table-3-style rows: one line per model with both intervals."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "n", "mauc", "mauc_lower", "mauc_upper",
                         "c_index", "c_index_lower", "c_index_upper"])
        for report in reports:
            writer.writerow([
                report.model, report.n,
                repr(report.mauc.point), repr(report.mauc.lower),
                repr(report.mauc.upper),
                repr(report.c_index.point), repr(report.c_index.lower),
                repr(report.c_index.upper),
            ])
