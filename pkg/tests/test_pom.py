import numpy as np
import pytest

from helpers import (beta_vector, design_for_fit, make_table,
                     random_pom_instance)
from oracles import fd_gradient, pom_loglik
from ordiscore.errors import ConvergenceError, ValidationError
from ordiscore.pom import (PomFit, category_probs, cumulative_from_eta,
                           cumulative_probs, fit_from_doc, fit_pom, fit_to_doc,
                           linear_predictor, linear_predictors, log_likelihood,
                           refit_positive)


def two_by_two_table():
    # x=0: outcomes (50, 50); x=1: outcomes (25, 75) -> beta = log 3, theta1 = 0
    labels = ["a"] * 100 + ["b"] * 100
    y = [1] * 50 + [2] * 50 + [1] * 25 + [2] * 75
    return make_table(y, categorical={"x": (("a", "b"), labels)})


def counts_table(counts_by_level):
    """Single categorical variable; counts_by_level[level] = outcome counts."""
    labels, y = [], []
    for level, counts in counts_by_level.items():
        for j, c in enumerate(counts, start=1):
            labels += [level] * c
            y += [j] * c
    cats = tuple(counts_by_level)
    return make_table(y, categorical={"x": (cats, labels)})


# --- closed forms --------------------------------------------------------------


def test_two_by_two_recovers_log_odds_ratio():
    fit = fit_pom(two_by_two_table())
    assert fit.converged
    assert fit.theta[0] == pytest.approx(0.0, abs=1e-6)
    assert fit.beta["x"]["b"] == pytest.approx(np.log(3.0), abs=1e-6)


def test_intercept_only_matches_empirical_cumulative_logits():
    y = [1] * 50 + [2] * 30 + [3] * 20
    table = make_table(y, categorical={"g": (("all",), ["all"] * 100)})
    with pytest.warns(UserWarning):
        fit = fit_pom(table)
    assert fit.converged
    assert fit.theta[0] == pytest.approx(0.0, abs=1e-4)
    assert fit.theta[1] == pytest.approx(np.log(4.0), abs=1e-4)
    assert fit.variables == ()


def test_antisymmetric_data_gives_zero_coefficient():
    # flipping x flips the outcome distribution; by symmetry beta = 0
    table = counts_table({"a": (30, 20, 30), "b": (30, 20, 30)})
    fit = fit_pom(table)
    assert fit.converged
    assert fit.beta["x"]["b"] == pytest.approx(0.0, abs=1e-8)


def test_loglik_at_intercept_only_mle_is_entropy_sum():
    y = [1] * 5 + [2] * 3 + [3] * 2
    table = make_table(y, categorical={"g": (("all",), ["all"] * 10)})
    with pytest.warns(UserWarning):
        fit = fit_pom(table)
    expected = 10 * (0.5 * np.log(0.5) + 0.3 * np.log(0.3) + 0.2 * np.log(0.2))
    assert fit.log_likelihood == pytest.approx(expected, abs=1e-4)
    assert log_likelihood(fit, table) == pytest.approx(expected, abs=1e-4)


def test_single_row_log_likelihood_is_log_prob():
    fit = PomFit(link="logit", theta=(0.0,), beta={}, reference={},
                 variables=(), categories={}, outcome_labels=("1", "2"),
                 log_likelihood=0.0, converged=True, gradient_norm=0.0,
                 iterations=0, n_rows=1, flags=())
    table = make_table([1], outcome_labels=("1", "2"))
    assert log_likelihood(fit, table) == pytest.approx(np.log(0.5), abs=1e-12)


# --- optimizer behavior ---------------------------------------------------------


def test_fit_matches_direct_likelihood_and_is_a_local_maximum():
    rng = np.random.default_rng(42)
    table, _, _ = random_pom_instance(rng, n=250, n_vars=2, J=3)
    fit = fit_pom(table)
    assert fit.converged
    X = design_for_fit(table, fit)
    beta = beta_vector(fit)
    direct = pom_loglik(fit.theta, beta, X, table.outcome.values)
    assert fit.log_likelihood == pytest.approx(direct, abs=1e-8)
    # grid of parameter perturbations never improves the likelihood
    for scale in (1e-3, 1e-2, 0.1):
        for _ in range(20):
            d_theta = rng.normal(0, scale, size=len(fit.theta))
            d_beta = rng.normal(0, scale, size=beta.size)
            theta = np.asarray(fit.theta) + d_theta
            if not np.all(np.diff(theta) > 0):
                continue
            probe = pom_loglik(theta, beta + d_beta, X, table.outcome.values)
            assert probe <= fit.log_likelihood + 1e-9


def test_analytic_gradient_matches_finite_differences():
    from ordiscore.links import get_link
    from ordiscore.pom import _build_design, _grad_hess, _log_likelihood_at

    rng = np.random.default_rng(7)
    table, _, _ = random_pom_instance(rng, n=120, n_vars=2, J=4)
    fit = fit_pom(table)
    X, _ = _build_design(table, list(fit.variables), dict(fit.reference))
    y = table.outcome.values
    link = get_link("logit")
    n_theta = len(fit.theta)
    psi = rng.normal(0.0, 0.5, size=n_theta + X.shape[1])
    _, g, _ = _grad_hess(psi, X, y, link, n_theta)
    fd = fd_gradient(lambda p: _log_likelihood_at(p, X, y, link, n_theta), psi)
    assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0) < 1e-6


def test_theta_strictly_increasing_on_output():
    rng = np.random.default_rng(3)
    for _ in range(5):
        table, _, _ = random_pom_instance(rng, n=150, n_vars=2, J=4)
        fit = fit_pom(table)
        assert all(a < b for a, b in zip(fit.theta, fit.theta[1:]))


def test_probit_and_cloglog_links_fit():
    rng = np.random.default_rng(11)
    table, _, _ = random_pom_instance(rng, n=300, n_vars=2, J=3)
    for link in ("probit", "cloglog"):
        fit = fit_pom(table, link=link)
        assert fit.converged
        assert fit.link == link


def test_unknown_link_rejected():
    with pytest.raises(ValidationError):
        fit_pom(two_by_two_table(), link="cauchit")


def test_missing_outcome_category_is_an_error():
    y = [1] * 10 + [3] * 10
    table = make_table(y, outcome_labels=("1", "2", "3"),
                       categorical={"x": (("a", "b"), ["a", "b"] * 10)})
    with pytest.raises(ValidationError):
        fit_pom(table)


def test_perfect_separation_sets_flag():
    # gradient decays exponentially as beta drifts, so the fit may still
    # report convergence; the drift flag is the contract
    labels = ["a"] * 30 + ["b"] * 30
    y = [1] * 30 + [2] * 30
    table = make_table(y, categorical={"x": (("a", "b"), labels)})
    with pytest.warns(UserWarning, match="separation"):
        fit = fit_pom(table)
    assert any("separation" in flag for flag in fit.flags)
    assert abs(fit.beta["x"]["b"]) > 30


def test_iteration_cap_returns_unconverged_fit():
    rng = np.random.default_rng(19)
    table, _, _ = random_pom_instance(rng, n=200, n_vars=2, J=3)
    fit = fit_pom(table, max_iter=1, grad_tol=1e-14)
    assert not fit.converged
    assert fit.iterations <= 1


# --- refit_positive ------------------------------------------------------------


def test_refit_flips_single_negative_binary_variable():
    # x=b lowers the outcome: fitted beta is negative until b becomes reference
    labels = ["a"] * 100 + ["b"] * 100
    y = [1] * 25 + [2] * 75 + [1] * 50 + [2] * 50
    table = make_table(y, categorical={"x": (("a", "b"), labels)})
    fit = fit_pom(table)
    raw = fit.beta["x"]["b"]
    assert raw == pytest.approx(-np.log(3.0), abs=1e-6)
    positive = refit_positive(fit, table)
    assert positive.reference["x"] == "b"
    assert positive.beta["x"]["a"] == pytest.approx(np.log(3.0), abs=1e-6)
    # theta_j' = theta_j - beta_raw: both parameterizations describe the same
    # distribution, so F(theta' - eta') must equal F(theta - eta) per level
    assert positive.theta[0] == pytest.approx(fit.theta[0] - raw, abs=1e-6)


def test_refit_three_level_variable_shifts_effects_by_minimum():
    table = counts_table({"a": (50, 50), "b": (60, 40), "c": (45, 55)})
    fit = fit_pom(table)
    effects = {c: fit.effect("x", c) for c in ("a", "b", "c")}
    assert effects["b"] < 0 < effects["c"]
    positive = refit_positive(fit, table)
    assert positive.reference["x"] == "b"
    for cat in ("a", "b", "c"):
        assert positive.effect("x", cat) == pytest.approx(
            effects[cat] - effects["b"], abs=1e-6)
    assert min(positive.effect("x", c) for c in ("a", "b", "c")) == 0.0


def test_refit_already_positive_is_a_no_op():
    fit = fit_pom(two_by_two_table())
    assert min(fit.beta["x"].values()) >= 0
    positive = refit_positive(fit, two_by_two_table())
    assert positive is fit


def test_refit_idempotent():
    table = counts_table({"a": (50, 50), "b": (60, 40), "c": (45, 55)})
    positive = refit_positive(fit_pom(table), table)
    again = refit_positive(positive, table)
    assert again is positive


def test_refit_preserves_probabilities_and_score_differences():
    rng = np.random.default_rng(23)
    table, _, _ = random_pom_instance(rng, n=400, n_vars=3, J=3)
    fit = fit_pom(table)
    positive = refit_positive(fit, table)
    eta_before = linear_predictors(fit, table)
    eta_after = linear_predictors(positive, table)
    diff = eta_after - eta_before
    np.testing.assert_allclose(diff - diff[0], 0.0, atol=1e-8)
    for i in range(0, table.n_rows, 50):
        row = table.row_labels(i)
        np.testing.assert_allclose(category_probs(fit, row),
                                   category_probs(positive, row), atol=1e-7)


def test_refit_requires_converged_fit():
    table = two_by_two_table()
    fit = fit_pom(table, max_iter=0, grad_tol=1e-15)
    assert not fit.converged
    with pytest.raises(ValidationError):
        refit_positive(fit, table)


# --- prediction helpers ---------------------------------------------------------


def fitted_demo():
    table = counts_table({"a": (40, 30, 30), "b": (20, 30, 50),
                          "c": (30, 40, 30)})
    fit = fit_pom(table)
    return refit_positive(fit, table), table


def test_linear_predictor_reference_row_is_zero():
    fit, _ = fitted_demo()
    ref_row = {"x": fit.reference["x"]}
    assert linear_predictor(fit, ref_row) == 0.0


def test_linear_predictor_adds_active_coefficients():
    fit, _ = fitted_demo()
    for cat, coef in fit.beta["x"].items():
        assert linear_predictor(fit, {"x": cat}) == pytest.approx(coef)


def test_linear_predictor_rejects_unseen_category():
    fit, _ = fitted_demo()
    with pytest.raises(ValidationError):
        linear_predictor(fit, {"x": "zz"})


def test_linear_predictors_vectorized_agrees_with_scalar():
    fit, table = fitted_demo()
    etas = linear_predictors(fit, table)
    for i in (0, 50, 100, 200):
        assert etas[i] == pytest.approx(
            linear_predictor(fit, table.row_labels(i)))


def test_cumulative_probs_shape_and_terminal_one():
    fit, _ = fitted_demo()
    row = {"x": "a"}
    cum = cumulative_probs(fit, row)
    assert cum.shape == (3,)
    assert cum[-1] == 1.0
    assert np.all(np.diff(cum) >= 0)
    cats = category_probs(fit, row)
    assert cats.min() >= 0
    assert abs(cats.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(np.cumsum(cats), cum, atol=1e-12)


def test_cumulative_at_known_intercepts():
    fit = PomFit(link="logit", theta=(0.0, np.log(4.0)), beta={}, reference={},
                 variables=(), categories={}, outcome_labels=("1", "2", "3"),
                 log_likelihood=0.0, converged=True, gradient_norm=0.0,
                 iterations=0, n_rows=1, flags=())
    cum = cumulative_from_eta(fit, 0.0)
    np.testing.assert_allclose(cum, [0.5, 0.8, 1.0], atol=1e-12)


def test_large_eta_concentrates_mass_on_top_category():
    fit, _ = fitted_demo()
    cum = cumulative_from_eta(fit, 50.0)
    assert cum[0] < 1e-15 and cum[1] < 1e-15
    assert cum[-1] == 1.0


def test_cumulative_strictly_decreasing_in_eta():
    fit, _ = fitted_demo()
    etas = np.linspace(-3, 3, 13)
    cums = np.stack([cumulative_from_eta(fit, e) for e in etas])
    for j in range(2):
        assert np.all(np.diff(cums[:, j]) < 0)


def test_probit_and_logit_agree_at_zero():
    for link in ("logit", "probit"):
        fit = PomFit(link=link, theta=(0.0,), beta={}, reference={},
                     variables=(), categories={}, outcome_labels=("1", "2"),
                     log_likelihood=0.0, converged=True, gradient_norm=0.0,
                     iterations=0, n_rows=1, flags=())
        assert cumulative_from_eta(fit, 0.0)[0] == pytest.approx(0.5, abs=1e-12)


# --- serialization --------------------------------------------------------------


def test_fit_doc_round_trip():
    fit, _ = fitted_demo()
    back = fit_from_doc(fit_to_doc(fit))
    assert back.theta == fit.theta
    assert back.beta == fit.beta
    assert back.reference == fit.reference
    assert back.link == fit.link
    assert back.converged == fit.converged
