"""Second-order gradient boosting with exact greedy splits.

Each round fits one regression tree per output (1 for binary, C for
multiclass) to the gradients ``g`` and hessians ``h`` of the log-loss at the
current margins. A leaf holding rows ``I`` gets the Newton weight
``-G / (H + lambda)`` with ``G = sum(g_I)``, ``H = sum(h_I)``; a split is kept
only when its regularized gain is strictly positive. Leaf weights are stored
unshrunk and multiplied by the learning rate at prediction time.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .. import rng
from ..errors import DegenerateError
from ._backend import get_kernels

MODEL_VERSION = 1


def split_gain(G_L: float, H_L: float, G_R: float, H_R: float, lam: float, complexity_gamma: float = 0.0) -> float:
    """Reduction of the regularized objective from splitting a leaf in two."""
    G, H = G_L + G_R, H_L + H_R
    return 0.5 * (G_L * G_L / (H_L + lam) + G_R * G_R / (H_R + lam) - G * G / (H + lam)) - complexity_gamma


def leaf_weight(G: float, H: float, lam: float) -> float:
    if H + lam <= 0:
        raise DegenerateError(f"leaf has H + lambda = {H + lam}; weight undefined")
    return -G / (H + lam)


def leaf_objective(w: float, G: float, H: float, lam: float) -> float:
    return G * w + 0.5 * (H + lam) * w * w


@dataclass(frozen=True)
class GbdtConfig:
    n_rounds: int = 200
    learning_rate: float = 0.1
    lambda_l2: float = 1.0
    complexity_gamma: float = 0.0
    growth: str = "depth_wise"
    max_depth: int | None = 6
    max_leaves: int | None = None
    min_child_hessian: float = 1e-3
    subsample: float = 1.0
    colsample: float = 1.0
    seed: int = 0
    backend: str | None = None

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be at least 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.lambda_l2 < 0 or self.complexity_gamma < 0 or self.min_child_hessian < 0:
            raise ValueError("lambda_l2, complexity_gamma and min_child_hessian must be >= 0")
        if self.growth == "depth_wise":
            if self.max_depth is None or self.max_depth < 1:
                raise ValueError("depth_wise growth needs max_depth >= 1")
        elif self.growth == "leaf_wise":
            if self.max_leaves is None or self.max_leaves < 2:
                raise ValueError("leaf_wise growth needs max_leaves >= 2")
        else:
            raise ValueError(f"growth must be 'depth_wise' or 'leaf_wise', got {self.growth!r}")
        if not (0 < self.subsample <= 1 and 0 < self.colsample <= 1):
            raise ValueError("subsample and colsample must be in (0, 1]")

    @classmethod
    def depth_wise(cls, max_depth: int = 6, **kw) -> GbdtConfig:
        return cls(growth="depth_wise", max_depth=max_depth, max_leaves=None, **kw)

    @classmethod
    def leaf_wise(cls, max_leaves: int = 31, max_depth: int | None = None, **kw) -> GbdtConfig:
        return cls(growth="leaf_wise", max_leaves=max_leaves, max_depth=max_depth, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("backend")
        return d


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    grad_sum: np.ndarray
    hess_sum: np.ndarray
    depth: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def apply(self, X: np.ndarray, backend: str | None = None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return get_kernels(backend).apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray, backend: str | None = None) -> np.ndarray:
        return self.value[self.apply(X, backend)]

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"leaf_value": float(self.value[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "gain": float(self.gain[node]),
            "children": [self.to_dict(int(self.left[node])), self.to_dict(int(self.right[node]))],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Tree:
        cols: dict[str, list] = {k: [] for k in ("feature", "threshold", "left", "right", "value", "gain", "depth")}

        def visit(node: dict, depth: int) -> int:
            i = len(cols["feature"])
            for k in cols:
                cols[k].append(0)
            cols["depth"][i] = depth
            if "leaf_value" in node:
                cols["feature"][i], cols["left"][i], cols["right"][i] = -1, -1, -1
                cols["value"][i] = node["leaf_value"]
                return i
            cols["feature"][i] = node["feature"]
            cols["threshold"][i] = node["threshold"]
            cols["gain"][i] = node.get("gain", 0.0)
            cols["left"][i] = visit(node["children"][0], depth + 1)
            cols["right"][i] = visit(node["children"][1], depth + 1)
            return i

        visit(d, 0)
        n = len(cols["feature"])
        return cls(
            np.asarray(cols["feature"], dtype=np.intp),
            np.asarray(cols["threshold"], dtype=float),
            np.asarray(cols["left"], dtype=np.intp),
            np.asarray(cols["right"], dtype=np.intp),
            np.asarray(cols["value"], dtype=float),
            np.asarray(cols["gain"], dtype=float),
            np.full(n, np.nan),
            np.full(n, np.nan),
            np.asarray(cols["depth"], dtype=np.intp),
        )


class _Grower:
    """Grows one tree on fixed gradients. Nodes are numbered in creation order."""

    def __init__(self, Xt, order, g, h, cfg: GbdtConfig, features, kernels):
        self.Xt, self.order, self.g, self.h = Xt, order, g, h
        self.cfg = cfg
        self.features = features
        self.k = kernels
        self.mask = np.zeros(Xt.shape[1], dtype=np.uint8)
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.gain, self.G, self.H, self.depth = [], [], [], [], []
        self.rows: list[np.ndarray] = []

    def _new_node(self, rows: np.ndarray, depth: int) -> int:
        i = len(self.feature)
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(leaf_weight(G, H, self.cfg.lambda_l2))
        self.gain.append(0.0)
        self.G.append(G)
        self.H.append(H)
        self.depth.append(depth)
        self.rows.append(rows)
        return i

    def _find(self, node: int):
        rows = self.rows[node]
        self.mask[rows] = 1
        try:
            return self.k.best_split(
                self.Xt, self.order, self.mask, rows, self.g, self.h,
                self.G[node], self.H[node], self.cfg.lambda_l2,
                self.cfg.complexity_gamma, self.cfg.min_child_hessian, self.features,
            )
        finally:
            self.mask[rows] = 0

    def _split(self, node: int, gain: float, f: int, thr: float) -> tuple[int, int]:
        rows = self.rows[node]
        go_left = self.Xt[f, rows] <= thr
        d = self.depth[node] + 1
        lft = self._new_node(rows[go_left], d)
        rgt = self._new_node(rows[~go_left], d)
        self.feature[node], self.threshold[node] = f, thr
        self.left[node], self.right[node] = lft, rgt
        self.gain[node] = gain
        self.value[node] = 0.0
        return lft, rgt

    def grow(self, rows: np.ndarray) -> Tree:
        root = self._new_node(rows, 0)
        if self.cfg.growth == "depth_wise":
            frontier = [root]
            for _ in range(self.cfg.max_depth):
                nxt = []
                for node in frontier:
                    gain, f, thr = self._find(node)
                    if f >= 0 and gain > 0:
                        nxt.extend(self._split(node, gain, f, thr))
                if not nxt:
                    break
                frontier = nxt
        else:
            heap: list[tuple[float, int, int, float]] = []

            def push(node: int):
                if self.cfg.max_depth is not None and self.depth[node] >= self.cfg.max_depth:
                    return
                gain, f, thr = self._find(node)
                if f >= 0 and gain > 0:
                    heapq.heappush(heap, (-gain, node, f, thr))

            push(root)
            n_leaves = 1
            while heap and n_leaves < self.cfg.max_leaves:
                neg, node, f, thr = heapq.heappop(heap)
                for child in self._split(node, -neg, f, thr):
                    push(child)
                n_leaves += 1
        return Tree(
            np.asarray(self.feature, dtype=np.intp),
            np.asarray(self.threshold, dtype=float),
            np.asarray(self.left, dtype=np.intp),
            np.asarray(self.right, dtype=np.intp),
            np.asarray(self.value, dtype=float),
            np.asarray(self.gain, dtype=float),
            np.asarray(self.G, dtype=float),
            np.asarray(self.H, dtype=float),
            np.asarray(self.depth, dtype=np.intp),
        )


def _log_loss(F: np.ndarray, y: np.ndarray) -> float:
    if F.shape[1] == 1:
        m = F[:, 0]
        return float(np.mean(np.where(y == 1, np.logaddexp(0.0, -m), np.logaddexp(0.0, m))))
    return float(-np.mean(log_softmax(F, axis=1)[np.arange(len(y)), y]))


def _grad_hess(F: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if F.shape[1] == 1:
        p = expit(F)
        t = (y == 1).astype(float)[:, None]
        return p - t, p * (1.0 - p)
    P = softmax(F, axis=1)
    Y = np.zeros_like(P)
    Y[np.arange(len(y)), y] = 1.0
    return P - Y, P * (1.0 - P)


@dataclass
class GbdtModel:
    trees: list[list[Tree]]
    base_score: np.ndarray
    config: GbdtConfig
    n_classes: int
    n_features: int
    train_loss: list[float] = field(default_factory=list)

    @property
    def n_outputs(self) -> int:
        return len(self.trees)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        F = np.tile(self.base_score, (X.shape[0], 1))
        lr = self.config.learning_rate
        for k, per_class in enumerate(self.trees):
            for tree in per_class:
                F[:, k] += lr * tree.predict(X, self.config.backend)
        return F

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return predict_proba(self, X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(predict_proba(self, X), axis=1)

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "base_score": self.base_score.tolist(),
            "config": self.config.to_dict(),
            "trees": [[t.to_dict() for t in per_class] for per_class in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> GbdtModel:
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported GBDT model version {d.get('version')!r}")
        return cls(
            [[Tree.from_dict(t) for t in per_class] for per_class in d["trees"]],
            np.asarray(d["base_score"], dtype=float),
            GbdtConfig(**d["config"]),
            int(d["n_classes"]),
            int(d["n_features"]),
        )


def fit_gbdt(X: np.ndarray, y, cfg: GbdtConfig | None = None, n_classes: int | None = None) -> GbdtModel:
    """Fit a boosted forest on labels ``0..C-1`` (logistic loss for C = 2,
    softmax cross-entropy otherwise)."""
    cfg = cfg or GbdtConfig()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(getattr(y, "labels", y), dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be 2-D with one row per label")
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 training rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    C = int(n_classes or getattr(y, "n_classes", 0) or y.max() + 1)
    counts = np.bincount(y, minlength=C)
    if (counts > 0).sum() < 2:
        raise ValueError("need at least two distinct classes")
    kernels = get_kernels(cfg.backend)

    prior = np.clip(counts / n, 1e-15, 1.0)
    if C == 2:
        base = np.array([np.log(prior[1] / prior[0])])
    else:
        base = np.log(prior)
    K = len(base)
    F = np.tile(base, (n, 1))

    Xt = np.ascontiguousarray(X.T)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.intp))
    all_rows = np.arange(n, dtype=np.intp)
    all_feats = np.arange(d, dtype=np.intp)

    trees: list[list[Tree]] = [[] for _ in range(K)]
    losses = [_log_loss(F, y)]
    for r in range(cfg.n_rounds):
        g, h = _grad_hess(F, y)
        for k in range(K):
            rows, feats = all_rows, all_feats
            if cfg.subsample < 1.0 or cfg.colsample < 1.0:
                gen = rng.generator(cfg.seed, "gbdt", r, k)
                if cfg.subsample < 1.0:
                    m = max(2, int(round(cfg.subsample * n)))
                    rows = np.sort(gen.choice(n, size=m, replace=False)).astype(np.intp)
                if cfg.colsample < 1.0:
                    m = max(1, int(round(cfg.colsample * d)))
                    feats = np.sort(gen.choice(d, size=m, replace=False)).astype(np.intp)
            gk = np.ascontiguousarray(g[:, k])
            hk = np.ascontiguousarray(h[:, k])
            tree = _Grower(Xt, order, gk, hk, cfg, feats, kernels).grow(rows)
            F[:, k] += cfg.learning_rate * tree.value[tree.apply(X, cfg.backend)]
            trees[k].append(tree)
        losses.append(_log_loss(F, y))
    return GbdtModel(trees, base, cfg, C, d, losses)


def predict_proba(model: GbdtModel, X: np.ndarray) -> np.ndarray:
    F = model.decision_function(X)
    if model.n_outputs == 1:
        p = expit(F[:, 0])
        return np.column_stack([1.0 - p, p])
    return softmax(F, axis=1)


@dataclass
class GbdtClassifier:
    config: GbdtConfig = field(default_factory=GbdtConfig)
    model_: GbdtModel | None = field(default=None, repr=False)

    def fit(self, X, y, n_classes: int | None = None) -> GbdtClassifier:
        self.model_ = fit_gbdt(X, y, self.config, n_classes)
        return self

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self.model_, X)

    def predict(self, X) -> np.ndarray:
        return self.model_.predict(X)
