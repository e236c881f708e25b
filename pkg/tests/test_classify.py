from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats

from pausefeat.classify import (ALL, EXTENDING_K_GRID, ORIGINAL_K_GRID, ClassifierParams, ClassifierSpec, anova_f,
                                anova_f_columns, base_predictions, ensemble_vote, fit_predict, oversample, resolve_k,
                                select_top_k, smote)
from pausefeat.classify.mlp import MLP
from pausefeat.classify.svm import RBFSVM
from pausefeat.classify.trees import GradientBoosting, RandomForest


class TestAnova:
    def test_fixture(self):
        assert anova_f([1, 2, 3, 4], [0, 0, 1, 1]) == 8.0

    def test_identical_groups(self):
        assert anova_f([1, 2, 1, 2], [0, 0, 1, 1]) == 0.0

    def test_constant_column(self):
        assert anova_f([5, 5, 5, 5], [0, 1, 0, 1]) == 0.0

    def test_perfect_separation_is_infinite(self):
        assert anova_f([1, 1, 2, 2], [0, 0, 1, 1]) == math.inf

    def test_single_class(self):
        with pytest.raises(ValueError):
            anova_f([1, 2], [1, 1])

    def test_columns_match_scalar(self):
        rng = np.random.default_rng(0)
        X, y = rng.standard_normal((20, 4)), np.arange(20) % 2
        assert np.allclose(anova_f_columns(X, y), [anova_f(X[:, j], y) for j in range(4)], rtol=1e-14)


samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=15)


@pytest.mark.filterwarnings("ignore:Precision loss:RuntimeWarning")
@settings(max_examples=200, deadline=None)
@given(samples, samples)
def test_f_equals_pooled_t_squared(a, b):
    assume(np.var(a) + np.var(b) > 1e-3)
    t = stats.ttest_ind(a, b, equal_var=True).statistic
    f = anova_f(a + b, [0] * len(a) + [1] * len(b))
    assert f == pytest.approx(t * t, rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(samples, samples, st.floats(0.01, 100), st.floats(-100, 100))
def test_f_invariant_to_positive_affine_maps(a, b, slope, shift):
    assume(np.var(a) + np.var(b) > 1e-3)
    x = np.array(a + b)
    y = [0] * len(a) + [1] * len(b)
    assert anova_f(slope * x + shift, y) == pytest.approx(anova_f(x, y), rel=1e-9, abs=1e-9)


class TestSelection:
    def test_top_two(self):
        assert select_top_k([8, 0, 2], ["c1", "c2", "c3"], 2) == ["c1", "c3"]

    def test_all(self):
        assert select_top_k([8, 0, 2], ["c1", "c2", "c3"], ALL) == ["c1", "c3", "c2"]

    def test_ties_by_name(self):
        assert select_top_k([1, 1, 1], ["b", "c", "a"], 2) == ["a", "b"]

    def test_infinite_ranks_first(self):
        assert select_top_k([8, math.inf], ["a", "b"], 1) == ["b"]

    def test_clamp_warns(self, caplog):
        assert resolve_k(30, 29) == 29
        assert "exceeds" in caplog.text

    def test_bad_k(self):
        with pytest.raises(ValueError):
            resolve_k(0, 5)

    def test_grids(self):
        assert EXTENDING_K_GRID == (3, 5, 7, 9, 11, 13, 15, 20, 25, 30, ALL)
        assert ORIGINAL_K_GRID == tuple(range(20, 101, 5)) + (150, 200, 250, 300, 350)


class TestSmote:
    def test_segment(self):
        rows = smote(np.array([[0.0, 0.0], [1.0, 1.0]]), 50, k_neighbors=1, seed=3)
        assert np.allclose(rows[:, 0], rows[:, 1]) and rows.min() >= 0 and rows.max() <= 1

    def test_balanced_adds_nothing(self):
        X, y = np.eye(4), np.array([0, 1, 0, 1])
        X2, y2 = oversample(X, y)
        assert np.array_equal(X2, X) and np.array_equal(y2, y)

    def test_equalises_classes(self):
        rng = np.random.default_rng(0)
        X, y = rng.standard_normal((10, 3)), np.array([1] * 7 + [0] * 3)
        X2, y2 = oversample(X, y)
        assert np.bincount(y2).tolist() == [7, 7]
        assert np.array_equal(X2[:10], X)

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            smote(np.zeros((1, 2)), 3)

    def test_reproducible(self):
        m = np.random.default_rng(1).standard_normal((6, 3))
        assert np.array_equal(smote(m, 9, seed=4), smote(m, 9, seed=4))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 12), st.integers(1, 3), st.integers(1, 30), st.integers(1, 8), st.integers(0, 1000))
def test_smote_rows_inside_bounding_box(m, d, n_new, k, seed):
    minority = np.random.default_rng(seed).standard_normal((m, d))
    rows = smote(minority, n_new, k, seed)
    lo, hi = minority.min(axis=0), minority.max(axis=0)
    assert rows.shape == (n_new, d)
    for r in rows:
        assert np.all(r >= lo - 1e-12) and np.all(r <= hi + 1e-12)


def xor_data():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0], [0.1, 0.1], [0.9, 0.9], [0.1, 0.9], [0.9, 0.1]])
    return X * 4, np.array([0, 0, 1, 1, 0, 0, 1, 1])


class TestModels:
    def test_forest_memorises(self):
        X, y = np.array([[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]]), np.array([0, 0, 1, 1])
        assert np.array_equal(RandomForest(100, seed=0).fit(X, y).predict(X), y)

    def test_svm_xor(self):
        X, y = xor_data()
        assert np.array_equal(RBFSVM().fit(X, y).predict(X), y)

    def test_boosting_fits_interval_pattern(self):
        X = np.arange(12.0)[:, None]
        y = ((X[:, 0] > 3) & (X[:, 0] < 8)).astype(int)
        gbm = GradientBoosting(50, 0.3, 3).fit(X, y)
        assert np.array_equal(gbm.predict(X), y)

    def test_boosting_reduces_training_loss(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((40, 3))
        y = (X[:, 0] + 0.5 * rng.standard_normal(40) > 0).astype(int)

        def loss(n):
            F = GradientBoosting(n, 0.1, 3).fit(X, y).decision_function(X)
            return float(np.mean(np.logaddexp(0, F) - y * F))

        assert loss(20) < loss(5) < loss(1)

    def test_mlp_separable(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((40, 2))
        y = (X[:, 0] > 0).astype(int)
        assert (MLP(10, 200, 0.01, seed=0).fit(X, y).predict(X) == y).mean() >= 0.95

    def test_ensemble_tie_goes_to_ci(self):
        assert ensemble_vote(np.array([[1], [1], [0], [0]])).tolist() == [1]
        assert ensemble_vote(np.array([[1], [0], [0], [0]])).tolist() == [0]

    def test_ensemble_matches_vote_of_base_models(self):
        X, y = xor_data()
        preds = base_predictions(X, y, X, False, 0)
        assert set(preds) == {"RF", "GBM", "SVM", "NN", "Ens"}
        assert np.array_equal(preds["Ens"], ensemble_vote(np.vstack([preds[k] for k in ("RF", "GBM", "SVM", "NN")])))
        assert np.array_equal(fit_predict(ClassifierSpec("Ens"), X, y, X), preds["Ens"])

    def test_single_class_training_rejected(self):
        with pytest.raises(ValueError):
            fit_predict(ClassifierSpec("RF"), np.zeros((3, 2)), np.ones(3), np.zeros((1, 2)))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ClassifierSpec("KNN")

    @pytest.mark.parametrize("kind", ["RF", "GBM", "SVM", "NN"])
    def test_deterministic(self, kind):
        rng = np.random.default_rng(2)
        X, y = rng.standard_normal((30, 4)), np.arange(30) % 2
        spec = ClassifierSpec(kind, smote=True, seed=5, params=ClassifierParams(nn_epochs=20))
        assert np.array_equal(fit_predict(spec, X[:20], y[:20], X[20:]), fit_predict(spec, X[:20], y[:20], X[20:]))
