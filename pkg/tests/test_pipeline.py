import json

import numpy as np
import pytest

from conftest import cohort_like
from protovote.data import load_matrix, logcpm, low_expression_mask, stratified_kfold, stratified_split
from protovote.errors import ConfigurationError, LeakageError
from protovote.linalg import fit_standardizer
from protovote.pipeline import (
    FittedPipeline,
    PcaClampWarning,
    PipelineConfig,
    cross_validate,
    evaluate_split,
    fit_fold_transform,
    fit_pipeline,
    parallel_map,
)

FAST = PipelineConfig(n_rounds=10)


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    d = tmp_path_factory.mktemp("cohort")
    return load_matrix(*cohort_like(d, n_a=40, n_b=20, d=300))


def test_transform_uses_train_rows_only(cohort):
    m, y = cohort
    plan = stratified_split(y, 0.25, seed=0)
    tf = fit_fold_transform(m, plan.train_indices, 10, FAST)
    train = m.take_samples(plan.train_indices)
    keep = np.flatnonzero(low_expression_mask(train))
    np.testing.assert_array_equal(tf.keep, keep)
    ref = fit_standardizer(logcpm(train).values[:, keep])
    np.testing.assert_allclose(tf.standardizer.means, ref.means, rtol=1e-13)
    np.testing.assert_allclose(tf.standardizer.stds, ref.stds, rtol=1e-13)
    # changing only the held-out rows leaves every fitted statistic untouched
    bumped = m.values.copy()
    bumped[plan.test_indices] *= 7
    m2 = type(m)(m.sample_ids, m.feature_names, bumped)
    tf2 = fit_fold_transform(m2, plan.train_indices, 10, FAST)
    np.testing.assert_array_equal(tf2.standardizer.means, tf.standardizer.means)
    np.testing.assert_array_equal(tf2.pca.components, tf.pca.components)


def test_scoring_training_rows_raises(cohort):
    m, y = cohort
    plan = stratified_split(y, 0.25, seed=0)
    tf = fit_fold_transform(m, plan.train_indices, 5, FAST)
    tf.apply(m, plan.test_indices)
    with pytest.raises(LeakageError):
        tf.apply(m, plan.train_indices[:3])


def test_every_fold_has_its_own_statistics(cohort):
    m, y = cohort
    plan = stratified_kfold(y, 3, seed=1)
    means = []
    for f in range(3):
        train, held = plan.fold(f)
        tf = fit_fold_transform(m, train, 5, FAST, f"fold{f}")
        assert not tf.provenance.fit_ids & set(m.take_samples(held).sample_ids)
        means.append(tf.standardizer.means[:5])
    assert not np.array_equal(means[0], means[1])


def test_pc_count_clamped(cohort):
    m, y = cohort
    train = np.arange(0, 60, 3)
    with pytest.warns(PcaClampWarning, match="clamped to 19"):
        tf = fit_fold_transform(m, train, 500, FAST)
    assert tf.n_pcs == 19


def test_top_var_in_fold(cohort):
    m, y = cohort
    tf = fit_fold_transform(m, np.arange(40), 5, PipelineConfig(top_var=30))
    assert len(tf.keep) == 30


def test_bad_config():
    with pytest.raises(ConfigurationError):
        PipelineConfig(top_var=0)


def test_evaluate_split_reports(cohort):
    m, y = cohort
    plan = stratified_split(y, 0.25, seed=0)
    res = evaluate_split(m, y, plan.train_indices, plan.test_indices, 10, FAST, seed=0)
    assert set(res.reports) == {"proto", "gbdt_leaf", "gbdt_depth", "ensemble"}
    for r in res.reports.values():
        assert r.n == len(plan.test_indices)
        assert r.auc is not None


def test_unknown_model(cohort):
    m, y = cohort
    with pytest.raises(ConfigurationError):
        evaluate_split(m, y, np.arange(40), np.arange(40, 60), 5, FAST, 0, models=("svm",))


def test_bundle_roundtrip(cohort):
    m, y = cohort
    plan = stratified_split(y, 0.25, seed=2)
    fp = fit_pipeline(m, y, plan.train_indices, 8, FAST, seed=3)
    back = FittedPipeline.from_dict(json.loads(json.dumps(fp.to_dict())))
    a, _ = fp.predict(m, plan.test_indices)
    b, _ = back.predict(m, plan.test_indices)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    with pytest.raises(LeakageError):
        back.predict(m, plan.train_indices[:2])


def test_bundle_feature_check(cohort):
    m, y = cohort
    fp = fit_pipeline(m, y, np.arange(0, 60, 2), 4, FAST, seed=0)
    other = m.take_features(np.arange(10))
    with pytest.raises(ConfigurationError):
        fp.predict(other, np.arange(1, 60, 2))


def test_cv_deterministic_and_thread_independent(cohort, monkeypatch):
    m, y = cohort
    plan = stratified_kfold(y, 3, seed=0)
    a = cross_validate(m, y, plan, 5, FAST, seed=4)
    monkeypatch.setenv("PROTOVOTE_THREADS", "3")
    b = cross_validate(m, y, plan, 5, FAST, seed=4)
    for fa, fb in zip(a.folds, b.folds):
        for k in fa.reports:
            assert fa.reports[k].to_json() == fb.reports[k].to_json()
    assert 0 <= a.mean("ensemble", "balanced_accuracy") <= 1


def test_parallel_map_order(monkeypatch):
    monkeypatch.setenv("PROTOVOTE_THREADS", "4")
    assert parallel_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]


def test_threads_env_validated(monkeypatch):
    monkeypatch.setenv("PROTOVOTE_THREADS", "many")
    with pytest.raises(ConfigurationError):
        parallel_map(str, [1, 2])
