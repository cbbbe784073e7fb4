"""Proportional odds / cumulative link model, fitted by Newton's method.

The model is P(Y <= j) = F(theta_j - x'beta) with ordered intercepts theta and
one shared coefficient vector across the J-1 splits, so a positive coefficient
means a positive association with higher outcome categories. Predictors are
dummy-encoded categorical variables; each variable has a reference category
whose effect is pinned at zero.

Intercept ordering is enforced structurally: the optimizer works on
psi = (theta_1, log-gaps, beta) so every iterate keeps theta strictly
increasing. Newton steps use the analytic gradient and Hessian with Armijo
step-halving; a non-factorizable Hessian falls back to Levenberg damping and
finally plain gradient ascent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .data import KIND_CATEGORICAL, DataTable
from .errors import ConvergenceError, ValidationError
from .links import LinkFunction, get_link

PROB_FLOOR = 1e-300
SEPARATION_BOUND = 30.0
CLAMP_TOL = 1e-8
MIN_INIT_GAP = 1e-6
LL_NOISE = 64.0 * float(np.finfo(float).eps)


@dataclass(frozen=True)
class PomFit:
    """A fitted cumulative link model plus optimizer diagnostics."""

    link: str
    theta: tuple[float, ...]
    beta: dict[str, dict[str, float]]
    reference: dict[str, str]
    variables: tuple[str, ...]
    categories: dict[str, tuple[str, ...]]
    outcome_labels: tuple[str, ...]
    log_likelihood: float
    converged: bool
    gradient_norm: float
    iterations: int
    n_rows: int
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.theta, self.theta[1:])):
            raise ValidationError("fitted intercepts must be strictly increasing")
        for var, effects in self.beta.items():
            for cat, value in effects.items():
                if not np.isfinite(value):
                    raise ValidationError(
                        f"non-finite coefficient for {var!r} / {cat!r}")

    @property
    def n_categories(self) -> int:
        return len(self.outcome_labels)

    def effect(self, variable: str, category: str) -> float:
        """Coefficient for one category; the reference category contributes 0."""
        if variable not in self.categories:
            raise ValidationError(f"unknown variable {variable!r}")
        if category == self.reference[variable]:
            return 0.0
        try:
            return self.beta[variable][category]
        except KeyError:
            raise ValidationError(
                f"unseen category {category!r} for variable {variable!r}") from None


def fit_to_doc(fit: PomFit) -> dict:
    """JSON-ready form: link, intercepts, reference map, coefficients, diagnostics."""
    return {
        "link": fit.link,
        "theta": list(fit.theta),
        "variables": list(fit.variables),
        "categories": {v: list(c) for v, c in fit.categories.items()},
        "reference": dict(fit.reference),
        "beta": {v: dict(effects) for v, effects in fit.beta.items()},
        "outcome_labels": list(fit.outcome_labels),
        "diagnostics": {
            "log_likelihood": fit.log_likelihood,
            "converged": fit.converged,
            "gradient_norm": fit.gradient_norm,
            "iterations": fit.iterations,
            "n_rows": fit.n_rows,
            "flags": list(fit.flags),
        },
    }


def fit_from_doc(doc: Mapping) -> PomFit:
    try:
        diag = doc["diagnostics"]
        return PomFit(
            link=doc["link"],
            theta=tuple(float(t) for t in doc["theta"]),
            beta={v: {c: float(x) for c, x in effects.items()}
                  for v, effects in doc["beta"].items()},
            reference=dict(doc["reference"]),
            variables=tuple(doc["variables"]),
            categories={v: tuple(c) for v, c in doc["categories"].items()},
            outcome_labels=tuple(doc["outcome_labels"]),
            log_likelihood=float(diag["log_likelihood"]),
            converged=bool(diag["converged"]),
            gradient_norm=float(diag["gradient_norm"]),
            iterations=int(diag["iterations"]),
            n_rows=int(diag["n_rows"]),
            flags=tuple(diag.get("flags", ())),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"malformed model document: {exc}") from exc


# --- design assembly ----------------------------------------------------------


def _usable_variables(data: DataTable) -> tuple[list[str], list[str]]:
    """Variables to fit and those dropped for having a single category."""
    keep, dropped = [], []
    for spec in data.schema:
        if spec.kind != KIND_CATEGORICAL:
            raise ValidationError(
                f"column {spec.name!r} is continuous; categorize before fitting")
        if len(spec.categories) < 2:
            dropped.append(spec.name)
        else:
            keep.append(spec.name)
    return keep, dropped


def _build_design(data: DataTable, variables: Sequence[str],
                  reference: Mapping[str, str]):
    """Dummy columns (one per non-reference category) in declared order."""
    n = data.n_rows
    columns, names = [], []
    for var in variables:
        spec = data.spec_for(var)
        ref = reference[var]
        if ref not in spec.categories:
            raise ValidationError(
                f"reference {ref!r} is not a category of {var!r}")
        codes = data.columns[var]
        for k, cat in enumerate(spec.categories):
            if cat == ref:
                continue
            columns.append((codes == k).astype(np.float64))
            names.append((var, cat))
    X = np.column_stack(columns) if columns else np.zeros((n, 0))
    return X, names


# --- likelihood, gradient, Hessian in psi space --------------------------------


def _theta_from_psi(psi: np.ndarray, n_theta: int) -> np.ndarray:
    theta = np.empty(n_theta)
    theta[0] = psi[0]
    if n_theta > 1:
        theta[1:] = psi[0] + np.cumsum(np.exp(psi[1:n_theta]))
    return theta


def _pointwise_terms(psi, X, y, link: LinkFunction, n_theta):
    """Per-row CDF/density pieces at the current parameters."""
    theta = _theta_from_psi(psi, n_theta)
    beta = psi[n_theta:]
    eta = X @ beta if beta.size else np.zeros(X.shape[0])
    J = n_theta + 1
    top = y == J
    bot = y == 1

    # placeholder 0 where the boundary is +-inf; masks zero those rows out
    pad = np.concatenate(([0.0], theta, [0.0]))
    u = np.where(top, 0.0, pad[y] - eta)
    low = np.where(bot, 0.0, pad[y - 1] - eta)

    Fu = np.where(top, 1.0, link.cdf(u))
    Fl = np.where(bot, 0.0, link.cdf(low))
    a = np.where(top, 0.0, link.pdf(u))
    b = np.where(bot, 0.0, link.pdf(low))
    da = np.where(top, 0.0, link.dpdf(u))
    db = np.where(bot, 0.0, link.dpdf(low))
    P = np.maximum(Fu - Fl, PROB_FLOOR)
    return theta, P, a, b, da, db, top, bot


def _log_likelihood_at(psi, X, y, link, n_theta) -> float:
    _, P, *_ = _pointwise_terms(psi, X, y, link, n_theta)
    return float(np.log(P).sum())


def _grad_hess(psi, X, y, link, n_theta):
    """Log-likelihood, gradient, and Hessian with respect to psi."""
    theta, P, a, b, da, db, top, bot = _pointwise_terms(psi, X, y, link, n_theta)
    ll = float(np.log(P).sum())
    J = n_theta + 1
    rA = a / P
    rB = b / P

    # theta-space gradient: upper boundary of rows with y=j, lower of rows y=j+1;
    # boundary rows are masked to weight 0 and their index clipped into range
    idx_l = np.maximum(y - 2, 0)
    g_theta = (np.bincount(y - 1, weights=np.where(top, 0.0, rA), minlength=J)[:n_theta]
               - np.bincount(idx_l, weights=np.where(bot, 0.0, rB),
                             minlength=J)[:n_theta])
    g_eta = rB - rA
    g_beta = X.T @ g_eta

    # curvature pieces: second derivatives in (u, l) per row
    w_uu = da / P - rA * rA
    w_ll = -db / P - rB * rB
    w_ul = rA * rB

    H_tt = np.zeros((n_theta, n_theta))
    diag = (np.bincount(y - 1, weights=np.where(top, 0.0, w_uu), minlength=J)[:n_theta]
            + np.bincount(idx_l, weights=np.where(bot, 0.0, w_ll),
                          minlength=J)[:n_theta])
    H_tt[np.diag_indices(n_theta)] = diag
    if n_theta > 1:
        # rows with 2 <= y <= J-1 couple theta_{y-1} and theta_y
        inner = ~top & ~bot
        off = np.bincount(idx_l, weights=np.where(inner, w_ul, 0.0), minlength=J)
        for k in range(n_theta - 1):
            H_tt[k, k + 1] = H_tt[k + 1, k] = off[k]

    w_eta = w_uu + 2.0 * w_ul + w_ll
    H_bb = (X.T * w_eta) @ X if X.shape[1] else np.zeros((0, 0))

    H_tb = np.zeros((n_theta, X.shape[1]))
    if X.shape[1]:
        c_u = np.where(top, 0.0, -(w_uu + w_ul))
        c_l = np.where(bot, 0.0, -(w_ll + w_ul))
        for j in range(n_theta):
            rows_u = y == j + 1
            rows_l = y == j + 2
            weights = np.where(rows_u, c_u, 0.0) + np.where(rows_l, c_l, 0.0)
            H_tb[j] = weights @ X

    # chain rule to psi: theta_j = psi_0 + sum_{k<=j} exp(psi_k)
    gaps = np.exp(psi[1:n_theta])
    M = np.zeros((n_theta, n_theta))
    M[:, 0] = 1.0
    for k in range(1, n_theta):
        M[k:, k] = gaps[k - 1]

    g = np.concatenate([M.T @ g_theta, g_beta])
    H = np.zeros((n_theta + X.shape[1], n_theta + X.shape[1]))
    H[:n_theta, :n_theta] = M.T @ H_tt @ M
    if X.shape[1]:
        H_psib = M.T @ H_tb
        H[:n_theta, n_theta:] = H_psib
        H[n_theta:, :n_theta] = H_psib.T
        H[n_theta:, n_theta:] = H_bb
    # second-derivative term of the reparameterization (d2 theta / d gap2)
    for k in range(1, n_theta):
        H[k, k] += gaps[k - 1] * g_theta[k:].sum()
    return ll, g, H


def _ascent_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Newton direction solve((-H), g), damped until factorizable; else gradient."""
    A = -H
    damping = 0.0
    while True:
        try:
            if damping:
                factor = cho_factor(A + damping * np.eye(A.shape[0]))
            else:
                factor = cho_factor(A)
            return cho_solve(factor, g)
        except (LinAlgError, ValueError):
            damping = 1e-6 if damping == 0.0 else damping * 10.0
            if damping > 1e8:
                return g.copy()


def fit_pom(data: DataTable, link: str = "logit", grad_tol: float = 1e-8,
            max_iter: int = 100,
            reference: Mapping[str, str] | None = None,
            start_theta: Sequence[float] | None = None,
            start_beta: Mapping[str, Mapping[str, float]] | None = None) -> PomFit:
    """Maximum-likelihood fit of the cumulative link model on categorized data.

    All outcome categories must be present. Single-category predictors are
    dropped with a warning. Non-convergence is reported through the converged
    flag, not an exception; coefficient magnitudes above 30 raise a separation
    warning flag. start_theta/start_beta warm-start the optimizer; missing
    start_beta entries begin at zero.
    """
    link_fn = get_link(link)
    y = data.outcome.values
    J = data.outcome.n_categories
    n = data.n_rows
    if n == 0:
        raise ValidationError("cannot fit on an empty table")
    counts = np.bincount(y, minlength=J + 1)[1:]
    if (counts == 0).any():
        missing = [data.outcome.labels[j] for j in range(J) if counts[j] == 0]
        raise ValidationError(f"outcome categories absent from data: {missing}")

    variables, dropped = _usable_variables(data)
    flags = []
    if dropped:
        message = f"dropping single-category predictors: {dropped}"
        warnings.warn(message, stacklevel=2)
        flags.append(message)

    if reference is None:
        reference = {v: data.spec_for(v).categories[0] for v in variables}
    else:
        missing_ref = [v for v in variables if v not in reference]
        if missing_ref:
            raise ValidationError(f"no reference category given for: {missing_ref}")
        reference = {v: reference[v] for v in variables}

    X, names = _build_design(data, variables, reference)
    n_theta = J - 1

    if (start_theta is None) != (start_beta is None):
        raise ValidationError("start_theta and start_beta go together")
    if start_theta is None:
        # start from the empirical cumulative link values, beta = 0
        q = np.cumsum(counts[:-1]) / n
        theta0 = link_fn.inverse(q)
        beta0 = np.zeros(X.shape[1])
    else:
        theta0 = np.asarray(start_theta, dtype=float)
        if theta0.shape != (n_theta,) or not np.all(np.isfinite(theta0)) \
                or np.any(np.diff(theta0) <= 0.0):
            raise ValidationError(
                f"start_theta must be {n_theta} finite increasing values")
        beta0 = np.array([float(start_beta.get(var, {}).get(cat, 0.0))
                          for var, cat in names])
    psi = np.zeros(n_theta + X.shape[1])
    psi[0] = theta0[0]
    if n_theta > 1:
        psi[1:n_theta] = np.log(np.maximum(np.diff(theta0), MIN_INIT_GAP))
    psi[n_theta:] = beta0

    ll, g, H = _grad_hess(psi, X, y, link_fn, n_theta)
    iterations = 0
    converged = bool(np.max(np.abs(g), initial=0.0) < grad_tol)
    while not converged and iterations < max_iter:
        direction = _ascent_direction(H, g)
        slope = float(g @ direction)
        if slope <= 0.0:
            direction = g.copy()
            slope = float(g @ g)
            if slope == 0.0:
                break
        if slope <= LL_NOISE * max(1.0, abs(ll)):
            # the predicted gain is below the fp resolution of ll, so the
            # Armijo test would compare rounding noise; take the full step
            # if it contracts the gradient, else give up
            candidate = psi + direction
            ll_c, g_c, H_c = _grad_hess(candidate, X, y, link_fn, n_theta)
            if np.max(np.abs(g_c), initial=0.0) \
                    >= np.max(np.abs(g), initial=0.0):
                break
            psi, ll, g, H = candidate, ll_c, g_c, H_c
            iterations += 1
            converged = bool(np.max(np.abs(g), initial=0.0) < grad_tol)
            continue
        step = 1.0
        improved = False
        for _ in range(60):
            candidate = psi + step * direction
            if _log_likelihood_at(candidate, X, y, link_fn, n_theta) \
                    >= ll + 1e-4 * step * slope:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        psi = psi + step * direction
        ll, g, H = _grad_hess(psi, X, y, link_fn, n_theta)
        iterations += 1
        converged = bool(np.max(np.abs(g), initial=0.0) < grad_tol)

    theta = _theta_from_psi(psi, n_theta)
    beta_values = psi[n_theta:]
    beta: dict[str, dict[str, float]] = {v: {} for v in variables}
    for (var, cat), value in zip(names, beta_values):
        beta[var][cat] = float(value)

    if beta_values.size and np.max(np.abs(beta_values)) > SEPARATION_BOUND:
        message = ("possible separation: a coefficient exceeds "
                   f"{SEPARATION_BOUND:g} in magnitude")
        warnings.warn(message, stacklevel=2)
        flags.append(message)

    return PomFit(
        link=link,
        theta=tuple(float(t) for t in theta),
        beta=beta,
        reference=dict(reference),
        variables=tuple(variables),
        categories={v: data.spec_for(v).categories for v in variables},
        outcome_labels=data.outcome.labels,
        log_likelihood=ll,
        converged=converged,
        gradient_norm=float(np.max(np.abs(g), initial=0.0)),
        iterations=iterations,
        n_rows=n,
        flags=tuple(flags),
    )


def refit_positive(fit: PomFit, data: DataTable, grad_tol: float = 1e-8,
                   max_iter: int = 100) -> PomFit:
    """Re-reference every variable at its minimal-effect category and refit once.

    The refit is skipped when no reference changes (exact idempotence). Among
    tied minimal effects the current reference is kept if it ties; otherwise
    the earliest declared category wins. Refit coefficients in [-1e-8, 0) are
    clamped to zero with a warning flag.
    """
    if not fit.converged:
        raise ValidationError("refit requires a converged fit")
    new_reference = {}
    for var in fit.variables:
        cats = fit.categories[var]
        effects = np.array([fit.effect(var, c) for c in cats])
        best = effects.min()
        minimizers = [c for c, e in zip(cats, effects) if e == best]
        if fit.reference[var] in minimizers:
            new_reference[var] = fit.reference[var]
        else:
            new_reference[var] = minimizers[0]
    if new_reference == fit.reference:
        return fit

    # the re-referenced MLE is the old one shifted, so start the solver there
    shift = sum(fit.effect(var, new_reference[var]) for var in fit.variables)
    start_theta = tuple(t - shift for t in fit.theta)
    start_beta = {
        var: {cat: fit.effect(var, cat) - fit.effect(var, new_reference[var])
              for cat in fit.categories[var] if cat != new_reference[var]}
        for var in fit.variables
    }
    refit = fit_pom(data, link=fit.link, grad_tol=grad_tol, max_iter=max_iter,
                    reference=new_reference, start_theta=start_theta,
                    start_beta=start_beta)
    if not refit.converged:
        raise ConvergenceError(
            "refit with positive references failed to converge (gradient norm "
            f"{refit.gradient_norm:.3g} after {refit.iterations} iterations)")

    clamped = []
    beta = {v: dict(effects) for v, effects in refit.beta.items()}
    for var, effects in beta.items():
        for cat, value in effects.items():
            if -CLAMP_TOL <= value < 0.0:
                effects[cat] = 0.0
                clamped.append(f"{var}/{cat}")
    flags = refit.flags
    if clamped:
        message = f"clamped tiny negative coefficients to zero: {clamped}"
        warnings.warn(message, stacklevel=2)
        flags = flags + (message,)
    return replace(refit, beta=beta, flags=flags)


# --- prediction on fitted models ------------------------------------------------


def linear_predictor(fit: PomFit, row: Mapping[str, str]) -> float:
    """x'beta for one row given as {variable: category label}."""
    total = 0.0
    for var in fit.variables:
        if var not in row:
            raise ValidationError(f"row is missing variable {var!r}")
        total += fit.effect(var, row[var])
    return total


def linear_predictors(fit: PomFit, data: DataTable) -> np.ndarray:
    """Vectorized x'beta over a categorized table."""
    eta = np.zeros(data.n_rows)
    for var in fit.variables:
        spec = data.spec_for(var)
        effects = np.array([fit.effect(var, c) for c in spec.categories])
        eta += effects[data.columns[var]]
    return eta


def cumulative_probs(fit: PomFit, row: Mapping[str, str]) -> np.ndarray:
    """Cumulative vector (P(Y<=1), ..., P(Y<=J)) with the last entry exactly 1."""
    return cumulative_from_eta(fit, linear_predictor(fit, row))


def cumulative_from_eta(fit: PomFit, eta: float) -> np.ndarray:
    link = get_link(fit.link)
    probs = np.empty(fit.n_categories)
    probs[:-1] = link.cdf(np.asarray(fit.theta) - eta)
    probs[-1] = 1.0
    return probs


def category_probs(fit: PomFit, row: Mapping[str, str]) -> np.ndarray:
    """Per-category probabilities (successive differences of the cumulative vector)."""
    cumulative = cumulative_probs(fit, row)
    return np.maximum(np.diff(cumulative, prepend=0.0), 0.0)


def log_likelihood(fit: PomFit, data: DataTable) -> float:
    """Sum of log observed-category probabilities (floored at 1e-300) over a table."""
    link = get_link(fit.link)
    eta = linear_predictors(fit, data)
    y = data.outcome.values
    J = fit.n_categories
    theta = np.asarray(fit.theta)
    top = y == J
    bot = y == 1
    upper = np.where(top, 1.0, link.cdf(theta[np.minimum(y, J - 1) - 1] - eta))
    lower = np.where(bot, 0.0, link.cdf(theta[np.maximum(y - 2, 0)] - eta))
    return float(np.log(np.maximum(upper - lower, PROB_FLOOR)).sum())
