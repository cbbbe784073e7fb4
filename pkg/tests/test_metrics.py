import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from helpers import make_table
from oracles import (bc_endpoints, brute_binary_auc, brute_c_index,
                     brute_mean_auc)
from ordiscore.data import OrdinalOutcome, PredictorSpec, SyntheticSpec, \
    generate_synthetic, stratified_split
from ordiscore.config import PipelineConfig
from ordiscore.errors import ValidationError
from ordiscore.metrics import (EvalReport, ParsimonyCurve, ParsimonyPoint,
                               bc_interval, binary_auc, bootstrap_ci,
                               evaluate_scores, generalized_c_index, mauc_value,
                               mean_auc, parsimony_curve, parsimony_svg,
                               percentile_interval, report_to_doc,
                               write_parsimony_csv, write_report_csv)


def outcome(values, J=None):
    values = list(values)
    J = J or max(values)
    return OrdinalOutcome(tuple(str(j) for j in range(1, J + 1)),
                          np.asarray(values))


# --- binary AUC -----------------------------------------------------------------


def test_binary_auc_perfect_separation():
    assert binary_auc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0


def test_binary_auc_all_ties():
    assert binary_auc([7, 7, 7, 7], [0, 1, 0, 1]) == 0.5


def test_binary_auc_mixed():
    assert binary_auc([1, 2, 3, 4], [0, 1, 0, 1]) == 0.75


def test_binary_auc_single_class_is_an_error():
    with pytest.raises(ValidationError):
        binary_auc([1, 2], [1, 1])


# --- mean AUC -------------------------------------------------------------------


def test_mean_auc_perfect_ordering():
    result = mean_auc([10, 20, 30], outcome([1, 2, 3]))
    assert result.value == 1.0
    assert result.per_split == {1: 1.0, 2: 1.0}


def test_mean_auc_fixture():
    result = mean_auc([5, 15, 10, 20], outcome([1, 1, 2, 3]))
    assert result.value == 0.875
    assert result.per_split[1] == 0.75
    assert result.per_split[2] == 1.0


def test_mean_auc_complement_on_sign_flip():
    scores = np.array([3.0, 1.0, 4.0, 1.5, 9.0, 2.0])
    y = outcome([1, 1, 2, 2, 3, 3])
    assert mean_auc(-scores, y).value == pytest.approx(
        1.0 - mean_auc(scores, y).value, abs=1e-12)


def test_mean_auc_skips_single_class_split_with_warning():
    # label "3" is declared but absent: split Y>2 has one class
    y = outcome([1, 1, 2, 2], J=3)
    with pytest.warns(UserWarning, match="single-class"):
        result = mean_auc([1, 2, 3, 4], y)
    assert result.skipped == (2,)
    assert result.per_split.keys() == {1}


def test_mean_auc_no_valid_split_is_an_error():
    y = outcome([1, 1, 1], J=2)
    with pytest.raises(ValidationError):
        mean_auc([1, 2, 3], y)


# --- generalized c-index --------------------------------------------------------


def test_c_index_perfect_ordering():
    assert generalized_c_index([1, 2, 3], outcome([1, 2, 3])) == 1.0


def test_c_index_all_score_ties():
    assert generalized_c_index([5, 5, 5], outcome([1, 2, 3])) == 0.5


def test_c_index_fixture():
    assert generalized_c_index([5, 15, 10, 20], outcome([1, 1, 2, 3])) == 0.8


def test_c_index_identical_outcomes_is_an_error():
    with pytest.raises(ValidationError):
        generalized_c_index([1, 2], outcome([2, 2], J=2))


# --- brute-force equivalence and shared properties -------------------------------


@st.composite
def scored_instance(draw):
    n = draw(st.integers(4, 60))
    J = draw(st.integers(2, 5))
    y = draw(st.lists(st.integers(1, J), min_size=n, max_size=n))
    assume(len(set(y)) >= 2)
    scores = draw(st.lists(st.integers(0, 12), min_size=n, max_size=n))
    return [float(s) for s in scores], y, J


@given(scored_instance())
@settings(max_examples=150, deadline=None)
def test_metrics_match_brute_force(instance):
    scores, y, J = instance
    out = outcome(y, J)
    assert generalized_c_index(scores, out) == pytest.approx(
        brute_c_index(scores, y), abs=1e-12)
    labels = [1 if v > 1 else 0 for v in y]
    if 0 < sum(labels) < len(labels):
        assert binary_auc(scores, labels) == pytest.approx(
            brute_binary_auc(scores, labels), abs=1e-12)
    if any(1 <= j < max(y) for j in set(y)) and len(set(y)) >= 2:
        try:
            got = mean_auc(scores, out).value
        except ValidationError:
            return
        assert got == pytest.approx(brute_mean_auc(scores, y), abs=1e-12)


@given(scored_instance())
@settings(max_examples=60, deadline=None)
def test_metrics_invariant_under_monotone_transform(instance):
    scores, y, J = instance
    out = outcome(y, J)
    warped = [np.expm1(s / 3.0) + 2.0 * s for s in scores]
    assert generalized_c_index(scores, out) == pytest.approx(
        generalized_c_index(warped, out), abs=1e-12)
    try:
        base = mean_auc(scores, out).value
    except ValidationError:
        return
    assert base == pytest.approx(mean_auc(warped, out).value, abs=1e-12)


def test_j2_collapse_with_and_without_ties():
    rng = np.random.default_rng(0)
    y = [1] * 20 + [2] * 15
    out = outcome(y)
    distinct = rng.permutation(35).astype(float)
    a = binary_auc(distinct, [v - 1 for v in y])
    assert mean_auc(distinct, out).value == pytest.approx(a, abs=1e-12)
    assert generalized_c_index(distinct, out) == pytest.approx(a, abs=1e-12)
    tied = rng.integers(0, 4, size=35).astype(float)
    assert mean_auc(tied, out).value == pytest.approx(
        generalized_c_index(tied, out), abs=1e-12)


# --- bootstrap -------------------------------------------------------------------


def balanced_sample(n=60, seed=1):
    rng = np.random.default_rng(seed)
    y = np.array(([1, 2, 3] * n)[:n])
    scores = y + rng.normal(0, 1.2, size=n)
    return scores, outcome(y.tolist())


def test_bootstrap_deterministic_given_seed():
    scores, y = balanced_sample()
    a = bootstrap_ci(mauc_value, scores, y, B=50, seed=9)
    b = bootstrap_ci(mauc_value, scores, y, B=50, seed=9)
    assert (a.lower, a.upper, a.z0) == (b.lower, b.upper, b.z0)
    c = bootstrap_ci(mauc_value, scores, y, B=50, seed=10)
    assert (a.lower, a.upper) != (c.lower, c.upper)


def test_bootstrap_matches_independent_formula_on_same_streams():
    scores, y = balanced_sample(n=500, seed=3)
    B, seed = 80, 21
    ci = bootstrap_ci(mauc_value, scores, y, B=B, seed=seed)
    samples = []
    for b in range(B):
        rng = np.random.default_rng([seed, b])
        idx = rng.integers(0, scores.shape[0], scores.shape[0])
        samples.append(mauc_value(scores[idx], y.subset(idx)))
    lo, hi = bc_endpoints(np.asarray(samples), ci.point, 0.05)
    assert ci.lower == pytest.approx(lo, abs=1e-12)
    assert ci.upper == pytest.approx(hi, abs=1e-12)


def test_constant_metric_gives_degenerate_interval():
    scores, y = balanced_sample()
    ci = bootstrap_ci(lambda s, o: 0.75, scores, y, B=40, seed=0)
    assert ci.lower == ci.upper == ci.point == 0.75


def test_bc_reduces_to_percentile_when_z0_zero():
    rng = np.random.default_rng(5)
    samples = rng.normal(0.7, 0.05, size=101)
    point = float(np.median(samples))
    # 50 of 101 samples below the median -> frac 0.4950 -> z0 slightly < 0;
    # force exact balance instead
    samples = np.concatenate([samples[:50], samples[:50] + 0.2])
    point = float(np.median(samples))
    lo_bc, hi_bc, z0 = bc_interval(samples, point, 0.05)
    assert z0 == 0.0
    lo_p, hi_p = percentile_interval(samples, 0.05)
    assert (lo_bc, hi_bc) == (lo_p, hi_p)


def test_bootstrap_all_degenerate_resamples_is_an_error():
    scores, y = balanced_sample(n=20)
    baseline = np.sort(scores)

    def fussy(s, o):
        if np.array_equal(np.sort(np.asarray(s)), baseline):
            return 0.5
        raise ValidationError("degenerate")

    with pytest.raises(ValidationError, match="degenerate"):
        bootstrap_ci(fussy, scores, y, B=5, seed=0)


def test_bootstrap_redraws_past_occasional_degenerates():
    # one positive in 8 rows: some resamples miss class 2 and are redrawn
    y = outcome([1, 1, 1, 1, 1, 1, 1, 2])
    scores = np.arange(8, dtype=float)
    ci = bootstrap_ci(mauc_value, scores, y, B=40, seed=2)
    assert ci.n_used >= 38
    assert 0.0 <= ci.lower <= ci.upper <= 1.0


def test_bootstrap_rejects_bad_arguments():
    scores, y = balanced_sample()
    with pytest.raises(ValidationError):
        bootstrap_ci(mauc_value, scores, y, B=1)
    with pytest.raises(NotImplementedError):
        bootstrap_ci(mauc_value, scores, y, method="bca")
    with pytest.raises(ValidationError):
        bootstrap_ci(mauc_value, scores, y, method="jackknife")
    with pytest.raises(ValidationError):
        bootstrap_ci(mauc_value, scores, y, alpha=1.5)


# --- parsimony curve -------------------------------------------------------------


def pipeline_config(**kw):
    base = dict(data="unused.csv", schema="unused.json", output_dir="out")
    base.update(kw)
    return PipelineConfig(**base)


def test_parsimony_single_separating_variable():
    labels = ["a"] * 40 + ["b"] * 40
    y = [1] * 40 + [2] * 40
    train = make_table(y, categorical={"x": (("a", "b"), labels)})
    validation = make_table([1, 1, 2, 2],
                            categorical={"x": (("a", "b"),
                                               ["a", "a", "b", "b"])})
    curve = parsimony_curve(["x"], train, validation, pipeline_config())
    assert curve.points[0].k == 1
    assert curve.points[0].mauc == 1.0


def test_parsimony_plateaus_after_informative_variables():
    informative = [PredictorSpec(f"s{i}", "normal", (0.0, 1.0), beta=b)
                   for i, b in enumerate((1.0, 0.8, 0.6), start=1)]
    spec = SyntheticSpec(n=5000, theta=(-0.5, 1.0), predictors=tuple(informative),
                         noise_count=3, link="logit", seed=13)
    table = generate_synthetic(spec)
    split = stratified_split(table, (0.7, 0.2, 0.1), seed=1)
    ranking = ["s1", "s2", "s3", "noise_1", "noise_2", "noise_3"]
    curve = parsimony_curve(ranking, table.subset(split.train),
                            table.subset(split.validation), pipeline_config())
    assert curve.gain(3, 6) < 0.01
    assert [pt.k for pt in curve.points] == [1, 2, 3, 4, 5, 6]
    assert [pt.variable for pt in curve.points] == ranking


def test_parsimony_curve_validates_k_sequence():
    good = ParsimonyPoint(k=1, variable="a", mauc=0.6, converged=True)
    with pytest.raises(ValidationError):
        ParsimonyCurve((good, ParsimonyPoint(k=3, variable="b", mauc=0.7,
                                             converged=True)))


def test_parsimony_artifacts(tmp_path):
    curve = ParsimonyCurve((
        ParsimonyPoint(k=1, variable="a", mauc=0.61, converged=True),
        ParsimonyPoint(k=2, variable="b", mauc=0.72, converged=False),
    ))
    path = tmp_path / "parsimony.csv"
    write_parsimony_csv(path, curve)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,variable,mauc,converged"
    assert lines[2].startswith("2,b,0.72,false")
    svg = parsimony_svg(curve)
    assert svg.startswith("<svg") and "polyline" in svg


# --- evaluation reports ----------------------------------------------------------


def test_evaluate_scores_builds_full_report():
    scores, y = balanced_sample(n=90, seed=4)
    report = evaluate_scores("scorecard", scores, y, B=30, seed=1)
    assert report.model == "scorecard"
    assert report.n == 90
    assert 0 <= report.mauc.lower <= report.mauc.point <= report.mauc.upper <= 1
    assert set(report.per_split_auc) == {1, 2}
    doc = report_to_doc(report)
    assert doc["mauc"]["B"] == 30
    assert doc["per_split_auc"].keys() == {"1", "2"}


def test_report_requires_metrics_in_unit_interval():
    scores, y = balanced_sample()
    good = evaluate_scores("m", scores, y, B=20)
    bad_ci = good.mauc
    object.__setattr__(bad_ci, "point", 1.5) if False else None
    with pytest.raises(ValidationError):
        EvalReport(model="m", n=10,
                   mauc=type(good.mauc)(point=1.5, lower=0.0, upper=1.0,
                                        B=10, alpha=0.05, z0=0.0, seed=0,
                                        n_used=10),
                   c_index=good.c_index, per_split_auc={1: 0.5})


def test_report_csv_layout(tmp_path):
    scores, y = balanced_sample(n=60, seed=8)
    reports = [evaluate_scores("scorecard", scores, y, B=20),
               evaluate_scores("pom", scores, y, B=20)]
    path = tmp_path / "report.csv"
    write_report_csv(path, reports)
    lines = path.read_text().splitlines()
    assert lines[0] == ("model,n,mauc,mauc_lower,mauc_upper,"
                        "c_index,c_index_lower,c_index_upper")
    assert lines[1].startswith("scorecard,60,")
    assert lines[2].startswith("pom,60,")
