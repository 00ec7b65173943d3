import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import pair_auc
from protovote.metrics import (
    TABLE_COLUMNS,
    UndefinedMetricError,
    balanced_accuracy,
    binary_auc,
    build_report,
    confusion_matrix,
    table_rows_csv,
)


def test_perfect_predictions():
    y = [0, 1, 2, 2, 1]
    r = build_report(y, y)
    assert r.accuracy == r.balanced_accuracy == 1.0


def test_hand_binary_example():
    r = build_report([1, 1, 0, 0], [1, 0, 0, 0])
    assert r.recall[1] == 0.5
    assert r.specificity[1] == 1.0
    assert r.ppv[1] == 1.0
    assert r.f1[1] == pytest.approx(2 / 3, abs=1e-15)
    assert r.accuracy == 0.75
    assert r.balanced_accuracy == 0.75


def test_majority_only_predictor():
    y = [0] * 90 + [1] * 10
    r = build_report(y, [0] * 100)
    assert (r.accuracy, r.balanced_accuracy) == (0.9, 0.5)
    assert r.ppv[1] is None
    assert r.undefined["ppv"] == 1


def test_confusion_layout():
    cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 0], 3)
    np.testing.assert_array_equal(cm, [[1, 1, 0], [0, 1, 0], [1, 0, 0]])


def test_empty_input():
    with pytest.raises(ValueError):
        build_report([], [])


def test_length_mismatch():
    with pytest.raises(ValueError):
        build_report([0, 1], [0])


def test_balanced_is_mean_recall_random(rng):
    for _ in range(100):
        C = int(rng.integers(2, 6))
        n = int(rng.integers(C, 80))
        y = np.concatenate([np.arange(C), rng.integers(0, C, n - C)])
        p = rng.integers(0, C, n)
        r = build_report(y, p, n_classes=C)
        recalls = [np.mean(p[y == c] == c) for c in range(C)]
        assert r.balanced_accuracy == pytest.approx(np.mean(recalls), abs=1e-15)
        assert r.accuracy == pytest.approx(np.mean(p == y), abs=1e-15)


def test_f1_is_harmonic_mean(rng):
    y = rng.integers(0, 3, 200)
    p = rng.integers(0, 3, 200)
    r = build_report(y, p)
    for c in range(3):
        h = 2 * r.ppv[c] * r.recall[c] / (r.ppv[c] + r.recall[c])
        assert r.f1[c] == pytest.approx(h, abs=1e-12)


def test_accuracy_invariant_to_relabeling(rng):
    y = rng.integers(0, 4, 50)
    p = rng.integers(0, 4, 50)
    perm = np.array([2, 0, 3, 1])
    assert build_report(y, p).accuracy == build_report(perm[y], perm[p]).accuracy


def test_balanced_invariant_to_duplication(rng):
    y = rng.integers(0, 2, 60)
    p = rng.integers(0, 2, 60)
    dup = np.concatenate([np.arange(60), np.flatnonzero(y == 0).repeat(5)])
    assert balanced_accuracy(y, p) == pytest.approx(balanced_accuracy(y[dup], p[dup]), abs=1e-15)


# ------------------------------------------------------------------- AUC


def test_auc_separated():
    assert binary_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0


def test_auc_all_ties():
    assert binary_auc([0, 1, 0, 1], [0.4] * 4) == 0.5


def test_auc_hand_example():
    assert binary_auc([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1]) == 0.75


def test_auc_one_class():
    with pytest.raises(UndefinedMetricError):
        binary_auc([1, 1], [0.2, 0.3])


def test_auc_matches_pair_count(rng):
    for _ in range(60):
        n = int(rng.integers(2, 201))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = np.round(rng.random(n), int(rng.integers(1, 4)))  # rounding forces ties
        assert abs(binary_auc(y, s) - pair_auc(y, s)) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(-40, 40)), min_size=2, max_size=60))
def test_auc_monotone_invariance(rows):
    y = np.array([r[0] for r in rows])
    if y.all() or not y.any():
        return
    s = np.array([r[1] for r in rows]) / 8.0
    assert binary_auc(y, s) == pytest.approx(binary_auc(y, np.exp(s / 2) * 3 + 1), abs=1e-12)


def test_report_auc_binary_only():
    with pytest.raises(ValueError):
        build_report([0, 1, 2], [0, 1, 2], scores=[0.1, 0.2, 0.3])


def test_report_json_and_table():
    r = build_report([1, 1, 0, 0], [1, 0, 0, 0], scores=[0.9, 0.4, 0.3, 0.1])
    assert r.auc == 1.0
    s = r.summary()
    text = table_rows_csv([{"Model": "Ensemble", **s}])
    head, row = text.strip().splitlines()
    assert head.split(",")[: len(TABLE_COLUMNS)] == list(TABLE_COLUMNS)
    assert row.startswith("Ensemble,0.7500,1.0000,0.6667,1.0000,0.5000,1.0000")
    assert '"undefined"' in r.to_json()


def test_multiclass_summary_macro():
    r = build_report([0, 1, 2, 2], [0, 1, 1, 2])
    s = r.summary()
    assert s["AUC"] is None
    assert s["Sensitivity"] == pytest.approx(np.mean([1, 1, 0.5]))
