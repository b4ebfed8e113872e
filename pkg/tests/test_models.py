import io

import numpy as np
import pytest

from eigenbehaviour import models
from eigenbehaviour.errors import DataError, NumericalError
from eigenbehaviour.models import CohortTable, partial_correlation
from eigenbehaviour.pipeline import cohort_table
from eigenbehaviour.synth import generate_cohort

from .oracles import loo_loop, mann_whitney_auc, pinv_regression, residual_partial_corr, svm_qp


@pytest.fixture(scope="module")
def cohort30():
    c = generate_cohort(30, seed=11)
    return cohort_table(c.rows, c.timelines(), S_set=(24,), n_values=(3, 7))


# partial correlation

def test_partial_correlation_trivial_cases():
    rng = np.random.default_rng(0)
    x, z = rng.normal(size=(2, 50))
    assert partial_correlation(x, x, z).rho == pytest.approx(1.0)
    x, y, z = rng.normal(size=(3, 1000))
    pc = partial_correlation(x, y, z)
    assert abs(pc.rho) < 0.1 and pc.n == 1000 and 0 <= pc.p_value <= 1


def test_partial_correlation_oracle_and_symmetry():
    rng = np.random.default_rng(1)
    z = rng.normal(size=10)
    x = z + rng.normal(size=10)
    y = -0.5 * z + 0.3 * x + rng.normal(size=10)
    rho = partial_correlation(x, y, z).rho
    assert rho == pytest.approx(residual_partial_corr(x, y, z), abs=1e-12)
    assert partial_correlation(y, x, z).rho == rho


def test_partial_correlation_p_value():
    from scipy import stats

    rng = np.random.default_rng(2)
    x, y, z = rng.normal(size=(3, 25))
    pc = partial_correlation(x, y, z)
    t = pc.rho * np.sqrt(22 / (1 - pc.rho ** 2))
    assert pc.p_value == pytest.approx(2 * stats.t.sf(abs(t), 22), rel=1e-12)


def test_partial_correlation_errors():
    x = np.arange(6.0)
    with pytest.raises(DataError):
        partial_correlation(x, np.ones(6), x[::-1])
    with pytest.raises(DataError):
        partial_correlation(x[:3], x[:3] ** 2, -x[:3])
    with pytest.raises(DataError):
        partial_correlation(x, x, x[:5])
    with pytest.raises(NumericalError):
        partial_correlation(x, x ** 2, 2 * x + 1)


def test_stars():
    assert [models.significance_stars(p) for p in (0.001, 0.007, 0.02)] == ["**", "*", ""]


# regression

def test_regression_exact_and_two_points():
    rng = np.random.default_rng(3)
    F = rng.normal(size=(15, 2))
    y = 2.0 - F @ [1.5, 0.25]
    fit = models.fit_linear_regression(F, y)
    assert np.abs(fit.predict(F) - y).max() < 1e-9
    line = models.fit_linear_regression([[1.0], [3.0]], [2.0, 6.0])
    np.testing.assert_allclose([line.coef[0], line.intercept], [2.0, 0.0], atol=1e-12)


def test_regression_pinv_oracle():
    rng = np.random.default_rng(4)
    F = rng.normal(size=(20, 2))
    y = rng.normal(size=20)
    fit = models.fit_linear_regression(F, y)
    coef, icpt = pinv_regression(F, y)
    np.testing.assert_allclose(fit.coef, coef, atol=1e-9)
    assert fit.intercept == pytest.approx(icpt, abs=1e-9)


def test_regression_errors():
    F = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(DataError):
        models.fit_linear_regression(F, np.arange(5.0))
    with pytest.raises(DataError):
        models.fit_linear_regression(np.ones((2, 2)), [1.0, 2.0])


def _table(err, ages, scores):
    ids = tuple(f"q{i}" for i in range(len(ages)))
    return CohortTable(ids, ages, scores, {(24, 7): err})


def test_loo_trivial():
    rng = np.random.default_rng(5)
    err, ages = rng.random(12), rng.uniform(65, 95, 12)
    scores = 10 + 5 * err + 0.1 * ages
    assert models.loo_rmsd(_table(err, ages, scores), 24, 7).rmsd < 1e-9
    rep = models.loo_rmsd(_table(err, ages, np.full(12, 25.0)), 24, 7)
    np.testing.assert_allclose(rep.y_pred, 25.0, atol=1e-9)
    assert rep.rmsd < 1e-9 and rep.mse == pytest.approx(rep.rmsd ** 2)


def test_loo_oracle(cohort30):
    c = cohort30.subset(np.arange(10))
    rep = models.loo_rmsd(c, 24, 7)
    ref, preds = loo_loop(np.column_stack([c.feature(24, 7), c.ages]), c.scores)
    assert rep.rmsd == pytest.approx(ref, abs=1e-12)
    np.testing.assert_allclose(rep.y_pred, preds, atol=1e-10)
    base = models.loo_rmsd(c, use_reconstruction=False)
    assert base.rmsd == pytest.approx(loo_loop(c.ages[:, None], c.scores)[0], abs=1e-12)
    assert base.features == ("age",) and base.S is None


def test_loo_minimum_size():
    with pytest.raises(DataError, match="at least 3"):
        models.loo_rmsd(_table(np.r_[0.1, 0.2], np.r_[70.0, 80.0], np.r_[20.0, 25.0]), 24, 7)


# SVM

def test_svm_separable():
    rng = np.random.default_rng(6)
    F = np.vstack([rng.normal(-3, 0.5, (20, 2)), rng.normal(3, 0.5, (20, 2))])
    y = np.r_[-np.ones(20), np.ones(20)]
    m = models.train_svm(F, y)
    assert m.converged and not m.degenerate
    assert np.all(m.predict(F) == y)


def test_svm_degenerate():
    m = models.train_svm(np.ones((6, 2)), [1, -1, 1, -1, 1, -1])
    assert m.degenerate
    with pytest.raises(DataError):
        models.train_svm(np.ones((4, 2)), [1, 1, 1, 1])
    with pytest.raises(DataError):
        models.train_svm(np.ones((4, 2)), [1, 0, 1, 0])


def test_svm_qp_oracle():
    rng = np.random.default_rng(7)
    F = rng.normal(size=(12, 2))
    y = np.where(F[:, 0] + 0.5 * F[:, 1] + rng.normal(0, 0.8, 12) > 0, 1.0, -1.0)
    m = models.train_svm(F, y)
    w, b = svm_qp(F, y)
    np.testing.assert_allclose(m.coef, w, atol=1e-4)
    assert m.intercept == pytest.approx(b, abs=1e-4)
    ours, ref = m.decision_function(F), F @ w + b
    assert list(np.argsort(ours, kind="stable")) == list(np.argsort(ref, kind="stable"))


# ROC and AUC

def test_roc_basic():
    fpr, tpr = models.roc_curve([0.9, 0.8, 0.3, 0.1], [1, 1, -1, -1])
    assert models.auc_trapezoid(fpr, tpr) == 1.0
    fpr, tpr = models.roc_curve([0.5, 0.5, 0.5, 0.5], [1, -1, 1, -1])
    np.testing.assert_array_equal(fpr, [0, 1]) and np.testing.assert_array_equal(tpr, [0, 1])
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    with pytest.raises(DataError):
        models.roc_curve([1, 2], [1, 1])


def test_auc_matches_mann_whitney():
    rng = np.random.default_rng(8)
    for _ in range(20):
        s = np.round(rng.normal(size=40), 1)  # rounding creates ties
        y = np.where(rng.random(40) < 0.4, 1, -1)
        assert models.roc_auc(s, y) == pytest.approx(mann_whitney_auc(s, y), abs=1e-12)
        assert models.roc_auc(np.exp(3 * s) - 7, y) == models.roc_auc(s, y)


def test_interpolate_roc():
    fpr, tpr = np.array([0, 0, 0.5, 1]), np.array([0, 0.5, 1, 1])
    np.testing.assert_allclose(models.interpolate_roc(fpr, tpr, [0, 0.25, 0.5, 1]), [0.5, 0.75, 1, 1])


def test_stratified_split():
    labels = np.r_[np.ones(16), -np.ones(32)]
    train, test = models.stratified_split(labels, 1 / 3, np.random.default_rng(0))
    assert len(test) == 16 and len(train) == 32
    assert np.sum(labels[test] == 1) in (5, 6)
    assert not set(train) & set(test)


def test_classification_perfect_and_shuffled():
    rng = np.random.default_rng(9)
    N = 150
    scores = rng.integers(15, 31, N).astype(float)
    ages = rng.uniform(65, 95, N)
    perfect = _table(10.0 * (scores < 26) + 0.01 * rng.random(N), ages, scores)
    assert models.classify_cohort(perfect, 24, 7, repeats=5).mean_auc == 1.0
    shuffled = _table(rng.random(N), ages, scores)
    aucs = [models.classify_cohort(shuffled.with_scores(rng.permutation(scores)), 24, 7, repeats=5, seed=s).mean_auc
            for s in range(10)]
    assert abs(np.mean(aucs) - 0.5) < 0.1


def test_classification_folds_match_rank_oracle(cohort30):
    rep = models.classify_cohort(cohort30, 24, 7, repeats=10, seed=3)
    assert len(rep.folds) == 10
    for f in rep.folds:
        assert f.auc == pytest.approx(mann_whitney_auc(f.scores, f.labels), abs=1e-9)
        assert len(f.test_idx) == 10 and set(f.labels) == {1, -1}
    assert rep.mean_auc == pytest.approx(models.auc_trapezoid(rep.mean_fpr, rep.mean_tpr))
    again = models.classify_cohort(cohort30, 24, 7, repeats=10, seed=3)
    assert again.to_json() == rep.to_json()


def test_classification_needs_both_classes():
    t = _table(np.arange(8.0), np.full(8, 70.0), np.r_[20.0, 20.0, 30, 30, 30, 30, 30, 30])
    with pytest.raises(DataError):
        models.classify_cohort(t, 24, 7)


def test_impaired_labels():
    np.testing.assert_array_equal(models.impaired_labels([25, 26, 30, 10]), [1, -1, -1, 1])


# grid search

def test_select_best_rules():
    surface = {(S, n): 5.0 + 0.01 * n for S in (24, 48) for n in range(1, 11)}
    surface[(24, 7)] = 1.0
    assert models.select_best(surface) == (24, 7)
    surface[(24, 3)] = surface[(48, 3)] = 0.5
    assert models.select_best(surface) == (24, 3)
    with pytest.raises(DataError):
        models.select_best({})


def test_grid_search_recovers_planted_cell():
    rng = np.random.default_rng(10)
    N = 20
    ages, scores = rng.uniform(65, 95, N), rng.integers(10, 31, N).astype(float)
    feats = {(S, n): rng.random(N) for S in (24, 48) for n in range(1, 5)}
    feats[(24, 3)] = (scores - 0.2 * ages) / 10
    cohort = CohortTable(tuple(f"q{i}" for i in range(N)), ages, scores, feats)
    res = models.grid_search(cohort, (24, 48), range(1, 5))
    assert res.best == (24, 3) and res.best_rmsd < 1e-9
    assert len(res.surface) == 8 and res.baseline_rmsd > 0
    feats[(48, 3)] = feats[(24, 3)]
    assert models.grid_search(cohort, (48, 24), range(1, 5)).best == (24, 3)


def test_saturation_flags(small_cohort):
    table = cohort_table(small_cohort.rows, small_cohort.timelines(), S_set=(24,), n_values=(5, 60))
    assert (24, 5) not in table.saturated
    assert set(table.saturated[(24, 60)]) == set(table.person_ids)
    res = models.grid_search(table, (24,), (5, 60))
    assert (24, 60) in res.saturated


def test_cohort_csv_roundtrip():
    rows = [("a", 70.0, 25.0), ("b", 81.5, 30.0)]
    buf = io.StringIO()
    models.write_cohort_csv(rows, buf)
    buf.seek(0)
    assert models.read_cohort_csv(buf) == rows
