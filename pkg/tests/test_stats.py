import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import rankdata

from voiceadapt import stats
from voiceadapt.corpus import load_shipped_corpus
from voiceadapt.errors import ConvergenceError, DegeneratePairingError, ValidationError

from factories import make_tuple, random_tuples


# design matrix -------------------------------------------------------------


def _naive_rows(tuples, formula):
    """Row-by-row constructor, independent of the vectorised builder."""
    subjects = sorted({t.subject_id for t in tuples})
    words = sorted({t.word_id for t in tuples})
    rows = []
    for t in tuples:
        r = t.row()
        row = [1.0] + [float(r[name]) for name in formula.fixed_terms]
        row += [float(r[a]) * float(r[b]) for a, b in formula.interactions]
        row += [1.0 if t.subject_id == s else 0.0 for s in subjects]
        row += [1.0 if t.word_id == w else 0.0 for w in words]
        rows.append(row)
    return np.array(rows)


def test_interaction_column_is_elementwise_product():
    tuples = [make_tuple(subject="A", word="x", voice=(1.0, 1.0, 1.0, 0.0), t30=0.5, ar=2.0),
              make_tuple(subject="B", word="y", voice=(2.0, 1.5, 2.0, 1.0), t30=0.5, ar=3.0)]
    formula = stats.ModelFormula(fixed_terms=("volume", "pitch"))
    dm = stats.build_design_matrix(tuples, formula)
    col = dm.names.index("volume:t30_s")
    np.testing.assert_array_equal(dm.X[:, col], [0.5, 1.0])


def test_subject_indicators_one_hot():
    tuples = random_tuples(21, seed=3)
    tuples = [t for t in tuples if t.subject_id in ("P00", "P01", "P02")]
    dm = stats.build_design_matrix(tuples, stats.ModelFormula(random_intercepts=("subject_id",)))
    (_, sl, levels), = dm.groups
    assert levels == ["P00", "P01", "P02"]
    Z = dm.X[:, sl]
    assert Z.shape[1] == 3
    np.testing.assert_array_equal(Z.sum(axis=1), 1.0)
    assert set(np.unique(Z)) == {0.0, 1.0}


def test_design_matches_row_oracle():
    tuples = random_tuples(60, seed=11)
    formula = stats.ModelFormula()
    dm = stats.build_design_matrix(tuples, formula)
    np.testing.assert_array_equal(dm.X, _naive_rows(tuples, formula))
    assert dm.names[:dm.n_fixed] == ["(intercept)", *stats.FIXED_PREDICTORS, "volume:t30_s"]


def test_design_errors():
    tuples = random_tuples(10, seed=0)
    with pytest.raises(ValidationError, match="constant"):
        stats.build_design_matrix(random_tuples(10, seed=0, voice=(1.0, 1.0, 1.0, 0.0)))
    cols = stats.design.as_columns(tuples)
    del cols["pitch"]
    with pytest.raises(ValidationError, match="missing columns"):
        stats.build_design_matrix(cols)


def test_intercept_flag():
    dm = stats.build_design_matrix(random_tuples(20), stats.ModelFormula(intercept=False))
    assert "(intercept)" not in dm.names


# gamma GLM -----------------------------------------------------------------


def _gamma_data(rng, n=5000, shape=5.0, b0=0.5, b1=1.2):
    x = rng.standard_normal(n)
    mu = np.exp(b0 + b1 * x)
    return np.column_stack([np.ones(n), x]), rng.gamma(shape, mu / shape)


def test_intercept_only_closed_form(rng):
    y = rng.gamma(3.0, 2.0, 400)
    fit = stats.fit_arrays(np.ones((400, 1)), y, 1)
    assert abs(fit.coefficients[0].estimate - math.log(y.mean())) < 1e-8


def test_coefficient_recovery(rng):
    X, y = _gamma_data(rng)
    fit = stats.fit_arrays(X, y, 2, names=["(intercept)", "x"])
    assert fit.converged
    assert abs(fit.coef("(intercept)").estimate - 0.5) < 0.05
    assert abs(fit.coef("x").estimate - 1.2) < 0.05
    # Pearson dispersion estimates 1 / shape
    assert abs(fit.dispersion - 0.2) < 0.02


def test_confidence_interval_coverage():
    rng = np.random.default_rng(2024)
    hits, total = 0, 0
    for _ in range(200):
        X, y = _gamma_data(rng)
        fit = stats.fit_arrays(X, y, 2)
        for c, true in zip(fit.coefficients, (0.5, 1.2)):
            hits += abs(c.estimate - true) <= 1.959964 * c.std_error
            total += 1
    # 400 intervals: binomial sd of the rate is about 0.011
    assert 0.92 <= hits / total <= 0.98


@pytest.fixture(scope="module")
def random_intercept_fit():
    rng = np.random.default_rng(5)
    n_subj, per = 50, 40
    subj = np.repeat(np.arange(n_subj), per)
    u = rng.normal(0.0, 0.3, n_subj)
    x1, x2 = rng.standard_normal(n_subj * per), rng.standard_normal(n_subj * per)
    mu = np.exp(0.3 + 0.8 * x1 - 0.5 * x2 + u[subj])
    y = rng.gamma(5.0, mu / 5.0)
    Z = np.eye(n_subj)[subj]
    X = np.column_stack([np.ones_like(x1), x1, x2, Z])
    groups = [("subject_id", slice(3, 3 + n_subj), [str(i) for i in range(n_subj)])]
    return stats.fit_arrays(X, y, 3, groups, names=["(intercept)", "x1", "x2"] + groups[0][2]), X, y


def test_random_intercept_sd_recovered(random_intercept_fit):
    fit, _, _ = random_intercept_fit
    sigma = math.sqrt(fit.variance_components["subject_id"])
    assert 0.2 <= sigma <= 0.4
    assert fit.coef("x1").estimate > 0 and fit.coef("x2").estimate < 0


def test_score_equations(random_intercept_fit):
    fit, X, y = random_intercept_fit
    fit.design = stats.DesignMatrix(X, [], 3, [("subject_id", slice(3, 53), [str(i) for i in range(50)])])
    assert np.max(np.abs(stats.score_residual(fit, y))) < 1e-6


def test_score_equations_study_model():
    tuples = random_tuples(300, seed=8)
    fit = stats.fit_gamma_glm(tuples)
    y = stats.response_vector(tuples, stats.ModelFormula())
    assert np.max(np.abs(stats.score_residual(fit, y))) < 1e-6


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_log_link_fitted_means_positive(seed):
    r = np.random.default_rng(seed)
    X = np.column_stack([np.ones(80), r.standard_normal((80, 2)) * 3])
    y = r.gamma(0.5, 4.0, 80) + 1e-4
    try:
        fit = stats.fit_arrays(X, y, 3)
    except ConvergenceError:
        return
    assert np.all(fit.fitted > 0)


def test_row_permutation_invariance():
    tuples = random_tuples(200, seed=4)
    perm = np.random.default_rng(0).permutation(len(tuples))
    a = stats.fit_gamma_glm(tuples)
    b = stats.fit_gamma_glm([tuples[i] for i in perm])
    np.testing.assert_allclose([c.estimate for c in a.coefficients],
                               [c.estimate for c in b.coefficients], rtol=0, atol=1e-9)


def test_glm_errors(rng):
    X = np.column_stack([np.ones(20), rng.standard_normal(20)])
    with pytest.raises(ValidationError, match="strictly positive"):
        stats.fit_arrays(X, np.zeros(20), 2)
    with pytest.raises(ValidationError, match="linearly dependent"):
        stats.fit_arrays(np.column_stack([X, 2 * X[:, 1]]), np.ones(20), 3)
    with pytest.raises(ValidationError, match="more observations"):
        stats.fit_arrays(X[:2], np.ones(2), 2)
    with pytest.raises(ConvergenceError) as exc:
        stats.fit_arrays(X, rng.gamma(2.0, 1.0, 20), 2, max_iter=1)
    assert exc.value.trace


def test_exp_estimate_and_report_fields(rng):
    X, y = _gamma_data(rng, n=500)
    fit = stats.fit_arrays(X, y, 2)
    c = fit.coefficients[1]
    assert c.exp_estimate == pytest.approx(math.exp(c.estimate))
    d = fit.to_dict()
    assert {"coefficients", "dispersion", "aic", "variance_components", "converged"} <= set(d)


def test_compare_links_prefers_generating_link(rng):
    x = rng.uniform(0.5, 2.0, 2000)
    y_log = rng.gamma(5.0, np.exp(0.2 + 0.9 * x) / 5.0)
    X = np.column_stack([np.ones_like(x), x])
    aic_log = stats.fit_arrays(X, y_log, 2, link="log").aic
    aic_inv = stats.fit_arrays(X, y_log, 2, link="inverse").aic
    assert aic_log < aic_inv
    y_inv = rng.gamma(5.0, 1.0 / (0.2 + 0.9 * x) / 5.0)
    assert stats.fit_arrays(X, y_inv, 2, link="inverse").aic < stats.fit_arrays(X, y_inv, 2, link="log").aic


def test_compare_links_report():
    out = stats.compare_links(random_tuples(200, seed=2))
    assert set(out["aic"]) <= {"log", "inverse"}
    assert out["best"] == min(out["aic"], key=out["aic"].get)


def test_corpus_coefficient_signs():
    fit = stats.fit_gamma_glm(load_shipped_corpus())
    for name in ("ar", "t30_s", "pitch", "speed"):
        assert fit.coef(name).estimate < 0, name
    assert fit.coef("volume:t30_s").estimate > 0


# Wilcoxon ------------------------------------------------------------------


def _exact_p(d):
    """Two-sided p from all 2^n sign assignments of the observed ranks."""
    d = np.asarray(d, dtype=np.float64)
    d = d[d != 0]
    r = rankdata(np.abs(d))
    w = r[d > 0].sum()
    centre = r.sum() / 2.0
    sums = np.array([np.dot(s, r) for s in itertools.product((0, 1), repeat=d.size)])
    return min(1.0, float(np.mean(np.abs(sums - centre) >= abs(w - centre) - 1e-9)))


def test_identical_pairs_are_degenerate():
    a = [1.0, 2.0, 3.0, 4.0, 5.0]
    with pytest.raises(DegeneratePairingError, match="degenerate pairing"):
        stats.wilcoxon_signed_rank(a, a)


def test_antisymmetric_differences():
    d = np.array([0.3, 1.1, 2.0, 0.7, 1.5])
    res = stats.wilcoxon_signed_rank(np.r_[d, -d], np.zeros(10))
    assert res.z_statistic == 0.0
    assert res.p_value == 1.0


def test_n8_fixture_matches_exact():
    a = np.array([0.81, 0.62, 0.95, 0.70, 0.55, 0.90, 0.77, 0.66])
    b = np.array([0.86, 0.71, 0.93, 0.82, 0.69, 0.97, 0.80, 0.79])
    res = stats.wilcoxon_signed_rank(a, b)
    assert res.z_statistic < 0
    assert abs(res.p_value - _exact_p(a - b)) < 0.03


@settings(max_examples=150)
@given(st.integers(0, 2**32 - 1), st.floats(-1.5, 1.5))
def test_random_n8_matches_exact(seed, shift):
    r = np.random.default_rng(seed)
    a = r.normal(size=8)
    b = a + r.normal(shift, 1.0, 8)
    assert abs(stats.wilcoxon_signed_rank(a, b).p_value - _exact_p(a - b)) < 0.03


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_monotone_transform_invariance(seed):
    r = np.random.default_rng(seed)
    a = r.uniform(0.1, 2.0, 12)
    b = a * np.exp(r.normal(0.1, 0.3, 12))
    base = stats.wilcoxon_signed_rank(a, b)
    for f in (lambda v: 3.0 * v + 1.0, np.log, np.sqrt, lambda v: v**3):
        fa, fb = f(a), f(b)
        same_signs = np.array_equal(np.sign(fa - fb), np.sign(a - b))
        same_order = np.array_equal(rankdata(np.abs(fa - fb)), rankdata(np.abs(a - b)))
        if same_signs and same_order:
            assert stats.wilcoxon_signed_rank(fa, fb).p_value == pytest.approx(base.p_value, abs=1e-12)


def test_sign_convention_and_effect_size():
    a = np.arange(1.0, 11.0)
    res = stats.wilcoxon_signed_rank(a, a + np.linspace(0.1, 1.0, 10))
    assert res.z_statistic < 0 and res.w_plus == 0.0
    assert res.effect_size_r == pytest.approx(abs(res.z_statistic) / math.sqrt(10))


def test_ties_use_midranks():
    res = stats.wilcoxon_signed_rank([1, 1, 1, 1, 1, 1], [0, 0, 0, 2, 2, 0])
    assert res.w_plus == pytest.approx(4 * 3.5)


def test_wilcoxon_errors():
    with pytest.raises(ValidationError, match="differ in length"):
        stats.wilcoxon_signed_rank([1, 2, 3], [1, 2])
    with pytest.raises(ValidationError, match="at least 5"):
        stats.wilcoxon_signed_rank([1, 2, 3, 4], [0, 0, 0, 0])
    with pytest.raises(ValidationError, match="finite"):
        stats.wilcoxon_signed_rank([1, 2, np.nan, 4, 5], [0] * 5)


def test_weakly_identified_variance_converges():
    # seven subjects with a tiny true spread: the plain update moves by ~2% per step
    fit = stats.fit_gamma_glm(random_tuples(200, seed=2))
    assert fit.converged and fit.iterations < 100
    assert fit.trace[-1]["relative_change"] < 1e-6
