"""Shared builders for test tables and random model instances."""

from __future__ import annotations

import numpy as np

from ordiscore.data import (KIND_CATEGORICAL, KIND_CONTINUOUS, ColumnSpec,
                            DataTable, OrdinalOutcome)
from ordiscore.links import get_link


def make_table(outcome, continuous=None, categorical=None,
               outcome_labels=None, outcome_name="outcome") -> DataTable:
    """Assemble a DataTable from plain python values.

    continuous: {name: list of floats (NaN allowed)}
    categorical: {name: (category tuple, list of labels)}
    outcome: list of 1-based integers; labels default to "1".."J".
    """
    outcome = np.asarray(outcome, dtype=np.int64)
    if outcome_labels is None:
        outcome_labels = tuple(str(j) for j in range(1, int(outcome.max()) + 1))
    schema, columns = [], {}
    for name, values in (continuous or {}).items():
        schema.append(ColumnSpec(name, KIND_CONTINUOUS))
        columns[name] = np.asarray(values, dtype=np.float64)
    for name, (cats, labels) in (categorical or {}).items():
        schema.append(ColumnSpec(name, KIND_CATEGORICAL, tuple(cats)))
        code = {c: i for i, c in enumerate(cats)}
        columns[name] = np.asarray([code[l] for l in labels], dtype=np.int64)
    return DataTable(tuple(schema), columns,
                     OrdinalOutcome(tuple(outcome_labels), outcome),
                     outcome_name)


def random_pom_instance(rng: np.random.Generator, n: int, n_vars: int, J: int,
                        max_levels: int = 3, link: str = "logit"):
    """Random categorical-predictor table drawn from a known cumulative model.

    Returns (table, true_theta, effects) where effects[var][category] is the
    generative coefficient (first category pinned at 0). Regenerates until all
    outcome categories and all predictor levels are occupied so the fitted
    design matches the generative one.
    """
    cdf = get_link(link).cdf
    for _ in range(100):
        levels = [int(rng.integers(2, max_levels + 1)) for _ in range(n_vars)]
        codes = [rng.integers(0, k, size=n) for k in levels]
        effects = [np.concatenate([[0.0], rng.uniform(-1.2, 1.2, size=k - 1)])
                   for k in levels]
        eta = np.zeros(n)
        for code, eff in zip(codes, effects):
            eta += eff[code]
        gaps = rng.uniform(0.4, 1.2, size=J - 1)
        theta = rng.uniform(-1.0, 0.0) + np.cumsum(gaps)
        cumulative = cdf(theta[None, :] - eta[:, None])
        y = 1 + (rng.random(n)[:, None] > cumulative).sum(axis=1)
        if len(np.unique(y)) != J:
            continue
        if any(len(np.unique(c)) != k for c, k in zip(codes, levels)):
            continue
        categorical = {}
        effect_map = {}
        for i, (code, eff, k) in enumerate(zip(codes, effects, levels)):
            name = f"v{i + 1}"
            cats = tuple(f"c{m}" for m in range(k))
            categorical[name] = (cats, [cats[c] for c in code])
            effect_map[name] = dict(zip(cats, eff))
        table = make_table(y, categorical=categorical)
        return table, theta, effect_map
    raise RuntimeError("could not draw an instance with all levels occupied")


def dummy_design(table: DataTable, variables, reference) -> np.ndarray:
    """One indicator column per non-reference category, declared order."""
    cols = []
    for name in variables:
        spec = table.spec_for(name)
        codes = table.columns[name]
        for i, cat in enumerate(spec.categories):
            if cat == reference[name]:
                continue
            cols.append((codes == i).astype(float))
    return np.column_stack(cols)


def design_for_fit(table: DataTable, fit) -> np.ndarray:
    """Design matrix matching the coefficient order of a PomFit."""
    cols = []
    for name in fit.variables:
        spec = table.spec_for(name)
        codes = table.columns[name]
        index = {c: i for i, c in enumerate(spec.categories)}
        for cat in fit.categories[name]:
            if cat == fit.reference[name]:
                continue
            cols.append((codes == index[cat]).astype(float))
    return np.column_stack(cols)


def beta_vector(fit) -> np.ndarray:
    """Coefficients of a PomFit in design_for_fit column order."""
    values = []
    for name in fit.variables:
        for cat in fit.categories[name]:
            if cat != fit.reference[name]:
                values.append(fit.beta[name][cat])
    return np.asarray(values, dtype=float)
