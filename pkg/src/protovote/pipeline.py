"""Fold-local preprocessing and the train/evaluate loops shared by the CLI.

Every statistic that depends on more than one sample (expression filter,
variance ranking, standardizer, PCA) is fitted on training rows only and
tagged with their sample ids, so scoring a held-out row that was used in a
fit raises :class:`~protovote.errors.LeakageError`.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .data import ExpressionMatrix, LabelSet, logcpm, low_expression_mask, top_variance_order
from .ensemble import VoterSet, vote
from .errors import ConfigurationError, EmptyResultError
from .gbdt import GbdtClassifier, GbdtConfig, GbdtModel
from .linalg import PcaModel, Provenance, Standardizer, check_disjoint, fit_pca, fit_standardizer, max_pcs
from .metrics import MetricsReport, build_report
from .prototype import PrototypeModel, ProtoClassifier

MODELS = ("proto", "gbdt_leaf", "gbdt_depth", "ensemble")
TABLE_NAMES = {"proto": "HF", "gbdt_depth": "XGB", "gbdt_leaf": "LGB", "ensemble": "ENS"}


class PcaClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    skip_normalization: bool = False
    cpm_threshold: float = 1.0
    min_fraction: float = 0.10
    top_var: int | None = None
    n_rounds: int = 100
    learning_rate: float = 0.1
    lambda_l2: float = 1.0
    max_depth: int = 6
    max_leaves: int = 31
    proto_rho: float = 0.0
    proto_bias: str = "zero"

    def __post_init__(self):
        if self.top_var is not None and self.top_var < 1:
            raise ConfigurationError("top_var must be positive")
        if not 0 < self.min_fraction <= 1:
            raise ConfigurationError("min_fraction must be in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def threads() -> int:
    try:
        return max(1, int(os.environ.get("PROTOVOTE_THREADS", "1")))
    except ValueError:
        raise ConfigurationError("PROTOVOTE_THREADS must be an integer") from None


def parallel_map(fn, items) -> list:
    """Ordered map; runs on a thread pool when PROTOVOTE_THREADS > 1."""
    items = list(items)
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------- transforms


@dataclass
class FoldTransform:
    keep: np.ndarray
    standardizer: Standardizer
    pca: PcaModel | None
    provenance: Provenance
    normalized: bool

    @property
    def n_pcs(self) -> int:
        return 0 if self.pca is None else self.pca.n_pcs

    def apply(self, m: ExpressionMatrix, rows: np.ndarray, held_out: bool = True) -> np.ndarray:
        sub = m.take_samples(rows)
        if held_out:
            check_disjoint(self.provenance, sub.sample_ids)
        vals = logcpm(sub).values if self.normalized else sub.values
        z = self.standardizer.transform(vals[:, self.keep])
        return z if self.pca is None else self.pca.transform(z)

    def to_dict(self) -> dict:
        return {
            "n_features_kept": int(len(self.keep)),
            "n_pcs": self.n_pcs,
            "normalized": self.normalized,
            "provenance": self.provenance.to_dict(),
        }


def fit_fold_transform(m: ExpressionMatrix, train: np.ndarray, n_pcs: int | None, cfg: PipelineConfig, tag: str = "fold") -> FoldTransform:
    """Filter, normalize, rank, standardize and project using ``train`` rows only.

    ``n_pcs`` above ``min(n_train - 1, d)`` is clamped with a warning;
    ``None`` skips the projection.
    """
    sub = m.take_samples(train)
    prov = Provenance(tag, frozenset(sub.sample_ids))
    if cfg.skip_normalization:
        vals = sub.values
        keep = np.arange(sub.shape[1])
    else:
        keep = np.flatnonzero(low_expression_mask(sub, cfg.cpm_threshold, cfg.min_fraction))
        if len(keep) == 0:
            raise EmptyResultError("low-expression filter removed every feature")
        vals = logcpm(sub).values[:, keep]
    if cfg.top_var is not None:
        order = top_variance_order(vals, min(cfg.top_var, vals.shape[1]))
        keep, vals = keep[order], vals[:, order]
    std = fit_standardizer(vals, prov)
    pca = None
    if n_pcs is not None:
        limit = max_pcs(len(train), vals.shape[1])
        if n_pcs > limit:
            warnings.warn(f"n_pcs={n_pcs} clamped to {limit} (n_train={len(train)}, d={vals.shape[1]})", PcaClampWarning, stacklevel=2)
            n_pcs = limit
        pca = fit_pca(std.transform(vals), n_pcs, prov)
    return FoldTransform(keep, std, pca, prov, not cfg.skip_normalization)


# --------------------------------------------------------------- learners


def make_learners(cfg: PipelineConfig, seed: int) -> dict:
    common = dict(n_rounds=cfg.n_rounds, learning_rate=cfg.learning_rate, lambda_l2=cfg.lambda_l2)
    return {
        "proto": ProtoClassifier(rho=cfg.proto_rho, bias=cfg.proto_bias, seed=rng.derive_seed(seed, "proto")),
        "gbdt_leaf": GbdtClassifier(GbdtConfig.leaf_wise(cfg.max_leaves, seed=rng.derive_seed(seed, "gbdt_leaf"), **common)),
        "gbdt_depth": GbdtClassifier(GbdtConfig.depth_wise(cfg.max_depth, seed=rng.derive_seed(seed, "gbdt_depth"), **common)),
    }


BUNDLE_VERSION = 1


@dataclass
class FittedPipeline:
    """A fold transform plus the three fitted voters."""

    transform: FoldTransform
    voters: dict
    class_names: list[str]
    feature_names: list[str]
    seed: int

    def posteriors(self, m: ExpressionMatrix, rows: np.ndarray, held_out: bool = True) -> np.ndarray:
        if list(m.feature_names) != self.feature_names:
            raise ConfigurationError("input features differ from the ones the bundle was trained on")
        X = self.transform.apply(m, rows, held_out)
        return VoterSet([self.voters[k] for k in ("proto", "gbdt_leaf", "gbdt_depth")], len(self.class_names)).posteriors(X)

    def predict(self, m: ExpressionMatrix, rows: np.ndarray, held_out: bool = True) -> tuple[dict, dict]:
        post = self.posteriors(m, rows, held_out)
        preds = np.argmax(post, axis=2).T
        out_pred = {"proto": preds[:, 0], "gbdt_leaf": preds[:, 1], "gbdt_depth": preds[:, 2], "ensemble": vote(preds, post)}
        out_post = {"proto": post[0], "gbdt_leaf": post[1], "gbdt_depth": post[2], "ensemble": post.mean(axis=0)}
        return out_pred, out_post

    def to_dict(self) -> dict:
        tf = self.transform
        return {
            "version": BUNDLE_VERSION,
            "seed": self.seed,
            "class_names": self.class_names,
            "feature_names": self.feature_names,
            "train_ids": sorted(tf.provenance.fit_ids),
            "transform": {
                "tag": tf.provenance.tag,
                "keep": [int(i) for i in tf.keep],
                "normalized": tf.normalized,
                "standardizer": tf.standardizer.to_dict(),
                "pca": None if tf.pca is None else tf.pca.to_dict(),
            },
            "voters": {k: v.to_dict() for k, v in self.voters.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> FittedPipeline:
        if d.get("version") != BUNDLE_VERSION:
            raise ConfigurationError(f"unsupported bundle version {d.get('version')!r}")
        t = d["transform"]
        prov = Provenance(t["tag"], frozenset(d["train_ids"]))
        tf = FoldTransform(
            np.asarray(t["keep"], dtype=np.intp),
            Standardizer.from_dict(t["standardizer"], prov),
            None if t["pca"] is None else PcaModel.from_dict(t["pca"], prov),
            prov,
            bool(t["normalized"]),
        )
        voters = {
            "proto": PrototypeModel.from_dict(d["voters"]["proto"]),
            "gbdt_leaf": GbdtModel.from_dict(d["voters"]["gbdt_leaf"]),
            "gbdt_depth": GbdtModel.from_dict(d["voters"]["gbdt_depth"]),
        }
        return cls(tf, voters, list(d["class_names"]), list(d["feature_names"]), int(d["seed"]))


def fit_pipeline(m: ExpressionMatrix, y: LabelSet, train: np.ndarray, n_pcs: int | None, cfg: PipelineConfig, seed: int, tag: str = "split") -> FittedPipeline:
    tf = fit_fold_transform(m, train, n_pcs, cfg, tag)
    Xtr = tf.apply(m, train, held_out=False)
    ytr = y.labels[train]
    learners = make_learners(cfg, seed)
    for learner in learners.values():
        learner.fit(Xtr, ytr, y.n_classes)
    voters = {k: v.model_ for k, v in learners.items()}
    return FittedPipeline(tf, voters, list(y.class_names), list(m.feature_names), seed)


@dataclass
class SplitResult:
    n_pcs: int
    reports: dict[str, MetricsReport]
    predictions: dict[str, np.ndarray]
    test_indices: np.ndarray
    transform: dict = field(default_factory=dict)


def score_pipeline(fp: FittedPipeline, m: ExpressionMatrix, y: LabelSet, test: np.ndarray, models=MODELS, positive: int = 1) -> SplitResult:
    unknown = set(models) - set(MODELS)
    if unknown:
        raise ConfigurationError(f"unknown models {sorted(unknown)}; choose from {MODELS}")
    yte = y.labels[test]
    C = len(fp.class_names)
    preds, post = fp.predict(m, test)
    reports = {}
    for name in models:
        scores = post[name][:, positive] if C == 2 and len(np.unique(yte)) == 2 else None
        reports[name] = build_report(yte, preds[name], scores, C, positive if C == 2 else 1)
    return SplitResult(fp.transform.n_pcs, reports, {k: preds[k] for k in models}, np.asarray(test), fp.transform.to_dict())


def evaluate_split(
    m: ExpressionMatrix,
    y: LabelSet,
    train: np.ndarray,
    test: np.ndarray,
    n_pcs: int | None,
    cfg: PipelineConfig,
    seed: int,
    models=MODELS,
    positive: int = 1,
    tag: str = "split",
) -> SplitResult:
    """Fit the transform and the three learners on ``train``; score ``test``."""
    unknown = set(models) - set(MODELS)
    if unknown:
        raise ConfigurationError(f"unknown models {sorted(unknown)}; choose from {MODELS}")
    return score_pipeline(fit_pipeline(m, y, train, n_pcs, cfg, seed, tag), m, y, test, models, positive)


@dataclass
class CvResult:
    n_pcs: int
    folds: list[SplitResult]

    def mean(self, model: str, metric: str) -> float:
        return float(np.mean([getattr(f.reports[model], metric) for f in self.folds]))


def cross_validate(m: ExpressionMatrix, y: LabelSet, plan, n_pcs: int | None, cfg: PipelineConfig, seed: int, models=MODELS, positive: int = 1) -> CvResult:
    def one(f):
        train, held = plan.fold(f)
        return evaluate_split(m, y, train, held, n_pcs, cfg, rng.derive_seed(seed, "fold", f), models, positive, f"fold{f}")

    results = parallel_map(one, range(plan.n_folds))
    return CvResult(results[0].n_pcs if results else 0, results)
