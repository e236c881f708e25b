from __future__ import annotations

import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from pausefeat import evaluation
from pausefeat.classify import ALL, ClassifierParams
from pausefeat.cv import make_folds, metrics, run_tasks, summarize
from pausefeat.evaluation import (SubseqReport, SubsetOutcome, TranscriptConfig, distances_for, feature_set_plan,
                                  guide_aggregates, run_transcript_cv, welch_test)
from pausefeat.features import FeatureTable
from pausefeat.seqmodel.model import ModelConfig
from pausefeat.seqmodel.search import ConfigSummary, GridResult, SpecificityGateError
from pausefeat.subseq import Context


class TestMetrics:
    def test_fixture(self):
        truth = [1, 1, 1, 1, 0, 0, 0, 0]
        pred = [1, 1, 1, 0, 0, 0, 1, 1]
        assert metrics(truth, pred) == {"acc": 0.625, "prec": 0.6, "sens": 0.75, "spec": 0.5}

    def test_zero_denominators(self):
        m = metrics([0, 0], [0, 0])
        assert m["acc"] == 1.0 and math.isnan(m["prec"]) and math.isnan(m["sens"]) and m["spec"] == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            metrics([1], [1, 0])

    def test_summarize_population_std(self):
        assert summarize([1.0, 3.0, float("nan")]) == (2.0, 1.0)


pairs = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40)


@settings(max_examples=200, deadline=None)
@given(pairs, st.randoms())
def test_metrics_invariant_to_row_order(rows, rnd):
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    a = metrics(*zip(*rows))
    b = metrics(*zip(*shuffled))
    assert all((math.isnan(a[k]) and math.isnan(b[k])) or a[k] == b[k] for k in a)


class TestFolds:
    def test_partition_and_determinism(self):
        y = np.array([0] * 13 + [1] * 8)
        a, b = make_folds(y, 5, seed=3), make_folds(y, 5, seed=3)
        assert np.array_equal(a.assignment, b.assignment)
        tests = np.concatenate([te for _, te in a])
        assert sorted(tests.tolist()) == list(range(21))

    def test_groups_stay_together(self):
        y = np.array([0, 0, 1, 1, 0, 1, 1, 0, 0, 1, 1, 0])
        groups = ["p0", "p0", "p1", "p1", "p2", "p3", "p3", "p4", "p5", "p6", "p7", "p8"]
        plan = make_folds(y, 3, seed=0, groups=groups)
        for g in set(groups):
            assert len({plan.assignment[i] for i, h in enumerate(groups) if h == g}) == 1

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            make_folds([0, 1], 5)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 40), st.integers(0, 40), st.integers(2, 10), st.integers(0, 10_000))
def test_stratified_folds_keep_class_shares(n0, n1, k, seed):
    y = np.array([0] * n0 + [1] * n1)
    if len(y) < k:
        return
    plan = make_folds(y, k, seed)
    assert set(plan.assignment.tolist()) <= set(range(k)) and (plan.assignment >= 0).all()
    for _, test in plan:
        for c, n in ((0, n0), (1, n1)):
            assert abs(np.sum(y[test] == c) - n / k) < 1.0 + 1e-9


def square(x):
    return x * x


def test_run_tasks_keeps_order_in_parallel():
    assert run_tasks(square, list(range(10)), workers=2) == [x * x for x in range(10)]


# --- guidance ------------------------------------------------------------------------


def outcome(context, seed_accs):
    cfg = ModelConfig()
    summary = ConfigSummary(0, cfg, 100, {"acc": list(seed_accs), "prec": [0.5], "sens": [0.5], "spec": [0.5]}, True)
    return SubsetOutcome(context, 10, GridResult(summary, [summary], []))


def report(**accs):
    return SubseqReport({Context(k): outcome(Context(k), v) for k, v in accs.items()}, (0, 1))


@pytest.mark.parametrize("winner,distances", [("C1", (1,)), ("C2", (1, 2)), ("C3", (1, 2, 3)), ("Utt", (1, 2, 3))])
def test_distances_for(winner, distances):
    assert distances_for(winner) == distances


def test_guide_picks_best_subset():
    g = guide_aggregates(report(C1=[0.5, 0.52], C2=[0.7, 0.72], C3=[0.6, 0.6]))
    assert g.winner is Context.C2 and g.distances == (1, 2) and g.warnings == ()


def test_guide_warns_when_utterance_wins():
    g = guide_aggregates(report(C1=[0.5, 0.5], Utt=[0.8, 0.8]))
    assert g.distances == (1, 2, 3) and any("whole-utterance" in w for w in g.warnings)


def test_guide_warns_on_overlap():
    g = guide_aggregates(report(C1=[0.60, 0.70], C2=[0.62, 0.70]))
    assert g.winner is Context.C2
    assert any("statistically indistinguishable" in w for w in g.warnings)


def test_guide_without_any_passing_subset():
    r = SubseqReport({Context.C1: SubsetOutcome(Context.C1, 10, None, "gate")}, (0,))
    with pytest.raises(SpecificityGateError):
        guide_aggregates(r)


def test_subsequence_tables():
    r = report(C1=[0.5, 0.52], C2=[0.7, 0.72])
    t3 = list(csv.reader(io.StringIO(r.table3_csv())))
    assert t3[0] == ["model", "accuracy", "acc_mean", "acc_std"]
    assert [row[0] for row in t3[1:]] == ["M-C1", "M-C2"] and t3[2][1] == "71.00±1.00"
    t6 = list(csv.reader(io.StringIO(r.table6_csv())))
    assert t6[0] == ["model", "bidirectional", "ffn_layers", "gru_hidden", "ffn_widths", "dropout"] and len(t6) == 3


# --- significance ---------------------------------------------------------------------


def hand_welch(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return t, 2 * stats.t.sf(abs(t), df)


def test_welch_identical_samples():
    assert welch_test([1, 2, 3], [1, 2, 3]) == (0.0, 1.0)
    assert welch_test([4, 4], [4, 4]) == (0.0, 1.0)


def test_welch_separated_normals():
    rng = np.random.default_rng(0)
    a, b = rng.normal(0, 1, 30), rng.normal(5, 1, 30)
    t, p = welch_test(a, b)
    assert p < 1e-6
    ht, hp = hand_welch(a, b)
    assert t == pytest.approx(ht, rel=1e-12) and p == pytest.approx(hp, rel=1e-9)


def test_welch_unequal_sizes_matches_hand_formula():
    rng = np.random.default_rng(1)
    a, b = rng.normal(0, 1, 12), rng.normal(0.3, 3, 40)
    assert welch_test(a, b) == pytest.approx(hand_welch(a, b), rel=1e-9)


def test_welch_needs_two_values():
    with pytest.raises(ValueError):
        welch_test([1], [1, 2])


# --- transcript protocol -----------------------------------------------------------


def small_table(n=30, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    cols = ["ORIG.a", "ORIG.b", "ORIG.c", "FD1.x", "FD1.y", "FD2.x"]
    X = rng.standard_normal((n, len(cols)))
    X[:, 3] += 2.0 * y
    X[2, 0] = np.nan
    return FeatureTable([f"t{i}" for i in range(n)], [f"p{i}" for i in range(n)], y, cols, X)


FAST = TranscriptConfig(n_folds=3, seeds=(0, 1), extending_k_grid=(1, ALL), original_k_grid=(2,),
                        params=ClassifierParams(rf_trees=5, gbm_estimators=5, nn_epochs=5))


@pytest.fixture(scope="module")
def transcript_report():
    return run_transcript_cv(small_table(), FAST)


def test_plan_covers_present_sets():
    plan = feature_set_plan(small_table(), FAST)
    assert list(plan) == ["Original", "Original w/ selection", "Original+F-D1", "Original+F-D2", "Original+F-C2"]


def test_transcript_tables(transcript_report):
    t2 = list(csv.reader(io.StringIO(transcript_report.table2_csv())))
    assert t2[0][:5] == ["feature_set", "acc", "prec", "sens", "spec"] and len(t2) == 6
    t7 = list(csv.reader(io.StringIO(transcript_report.table7_csv())))
    assert t7[0] == ["feature_set", "model", "k", "n_features", "smote"] and t7[1][2] == "all"
    preds = list(csv.reader(io.StringIO(transcript_report.predictions_csv())))
    assert len(preds) == 1 + 5 * 2 * 30


def test_means_recomputable_from_folds(transcript_report):
    d = transcript_report.to_dict()
    for entry in d["feature_sets"].values():
        folds = np.array(entry["per_fold_acc"]).reshape(2, 3)
        assert np.allclose(folds.mean(axis=1), entry["per_seed_acc"], atol=1e-9)
        assert entry["acc_mean"] == pytest.approx(np.mean(entry["per_seed_acc"]), abs=1e-9)


def test_signal_column_dominates_selection(transcript_report):
    entries = {c: count for c, _, count in transcript_report.selection["Original+F-D1"]}
    assert transcript_report.results["Original+F-D1"].n_selected in (1, 2)
    if transcript_report.results["Original+F-D1"].n_selected == 1:
        assert entries == {"FD1.x": 6}


def test_test_labels_do_not_reach_fitted_models(monkeypatch):
    table = small_table()
    fixed = make_folds(table.labels, 3, seed=0)
    monkeypatch.setattr(evaluation, "make_folds", lambda *a, **k: fixed)
    plan = feature_set_plan(table, FAST)
    base = evaluation._transcript_fold((0, 0), table, plan, FAST)
    _, test = fixed.split(0)
    shuffled = table.labels.copy()
    shuffled[test] = 1 - shuffled[test]
    other = FeatureTable(table.ids, table.groups, shuffled, table.columns, table.values)
    moved = evaluation._transcript_fold((0, 0), other, plan, FAST)
    for a, b in zip(base, moved):
        assert np.array_equal(a["pred"], b["pred"]) and a["selected"] == b["selected"]
