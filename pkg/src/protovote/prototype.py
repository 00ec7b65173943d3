"""Prototype-form classifier.

Scores are ``<mu_c + r_c, phi(x)> + b_c`` where ``mu_c`` is the mean mapped
support point of class ``c``, ``r_c`` a residual inside the ``rho``-ball and
``b_c`` a support-only bias. The feature map ``phi`` is fitted on a
class-balanced support and always lands in the closed ``B``-ball:

    standardize (support stats) -> random affine -> ReLU -> PCA (support)
    -> rescale so the support fits the B-ball -> radial clip to the B-ball

Because the model only sees the balanced support, adding samples to the
training pool that are not selected into the support cannot change it.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DomainError, MissingClassError
from .linalg import PcaModel, Provenance, fit_pca, pca_transform

MODEL_VERSION = 1


class SupportClampWarning(UserWarning):
    pass


def clip_to_ball(u: np.ndarray, radius: float) -> np.ndarray:
    """Radially shrink rows of ``u`` whose norm exceeds ``radius``.

    The result satisfies ``np.linalg.norm(row) <= radius`` in floating point,
    not just approximately, whether the norm is taken row by row or batched.
    """
    u = np.array(u, dtype=float, copy=True)
    single = u.ndim == 1
    if single:
        u = u[None, :]
    norms = np.linalg.norm(u, axis=1)
    over = np.flatnonzero(norms > radius)
    if len(over):
        src = u[over]
        # aim a few ulps inside so no summation order lands above the radius
        f = radius / norms[over] * (1.0 - 64 * np.finfo(float).eps)
        v = src * f[:, None]
        bad = _norm_upper(v) > radius
        while bad.any():
            f[bad] = np.nextafter(f[bad], 0.0)
            v[bad] = src[bad] * f[bad, None]
            bad = _norm_upper(v) > radius
        # rows that ended up hugging the radius get the scalar norm checked too
        for j in np.flatnonzero(_norm_upper(v) > radius * (1.0 - 8 * np.finfo(float).eps)):
            while max(np.linalg.norm(v[j]), np.sqrt(np.dot(v[j], v[j]))) > radius:
                f[j] = np.nextafter(f[j], 0.0)
                v[j] = src[j] * f[j]
        u[over] = v
    return u[0] if single else u


def _norm_upper(v: np.ndarray) -> np.ndarray:
    return np.maximum.reduce([np.linalg.norm(v, axis=1), np.sqrt(np.einsum("ij,ij->i", v, v)), np.sqrt((v * v).sum(axis=1))])


@dataclass(frozen=True)
class FeatureMap:
    input_dim: int
    bound: float
    kind: str = "random_relu"
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None
    projection: np.ndarray | None = None
    offsets: np.ndarray | None = None
    pca: PcaModel | None = None
    radial_scale: float = 1.0
    seed: int = 0

    @classmethod
    def identity(cls, input_dim: int, bound: float = 1.0) -> FeatureMap:
        """Clip-only map, for inputs that already live in feature space."""
        return cls(input_dim, float(bound), kind="identity")

    @property
    def output_dim(self) -> int:
        return self.input_dim if self.kind == "identity" else self.pca.n_pcs

    def raw(self, x: np.ndarray) -> np.ndarray:
        """The map before the final clip."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} input features, got {x.shape[-1]}")
        if self.kind == "identity":
            return x.copy()
        z = (x - self.input_mean) / self.input_scale
        h = np.maximum(z @ self.projection + self.offsets, 0.0)
        return pca_transform(self.pca, h) * self.radial_scale

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return clip_to_ball(self.raw(x), self.bound)

    def to_dict(self) -> dict:
        d = {"input_dim": self.input_dim, "bound": self.bound, "kind": self.kind, "seed": self.seed}
        if self.kind != "identity":
            d.update(
                input_mean=self.input_mean.tolist(),
                input_scale=self.input_scale.tolist(),
                projection=self.projection.tolist(),
                offsets=self.offsets.tolist(),
                pca=self.pca.to_dict(),
                radial_scale=self.radial_scale,
            )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> FeatureMap:
        if d["kind"] == "identity":
            return cls.identity(d["input_dim"], d["bound"])
        return cls(
            d["input_dim"],
            d["bound"],
            d["kind"],
            np.asarray(d["input_mean"]),
            np.asarray(d["input_scale"]),
            np.asarray(d["projection"]),
            np.asarray(d["offsets"]),
            PcaModel.from_dict(d["pca"]),
            d["radial_scale"],
            d["seed"],
        )


def fit_feature_map(
    support_rows: np.ndarray,
    p: int,
    bound: float = 1.0,
    seed: int = 0,
    width: int | None = None,
) -> FeatureMap:
    """Random ReLU features followed by a PCA fitted on the support.

    ``width`` defaults to ``4 * p``. The PCA output is scaled so the farthest
    support point sits on the ``bound`` sphere; other inputs are clipped.
    """
    s = np.asarray(support_rows, dtype=float)
    n, d = s.shape
    width = 4 * p if width is None else width
    if p < 1 or p > min(n - 1, width):
        raise ValueError(f"p={p} must be in [1, min(|S| - 1, width)] = [1, {min(n - 1, width)}]")
    if bound <= 0:
        raise ValueError("bound must be positive")
    mean = s.mean(axis=0)
    scale = s.std(axis=0)
    scale[scale == 0] = 1.0
    g = rng.generator(seed, "feature_map")
    proj = g.standard_normal((d, width)) / np.sqrt(d)
    offs = g.uniform(-1.0, 1.0, width)
    h = np.maximum((s - mean) / scale @ proj + offs, 0.0)
    pca = fit_pca(h, p, Provenance("feature_map/support"))
    u = pca_transform(pca, h)
    top = np.linalg.norm(u, axis=1).max()
    radial = bound / top if top > 0 else 1.0
    return FeatureMap(d, float(bound), "random_relu", mean, scale, proj, offs, pca, float(radial), seed)


@dataclass(frozen=True)
class BalancedSupport:
    indices: tuple[np.ndarray, ...]
    k: int

    @property
    def n_classes(self) -> int:
        return len(self.indices)

    def all_indices(self) -> np.ndarray:
        return np.concatenate(self.indices)

    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_classes), self.k)


def build_balanced_support(y, train_indices, k: int, seed: int = 0, n_classes: int | None = None) -> BalancedSupport:
    """Uniform ``k``-subset per class (without replacement) from the training rows.

    ``k`` is clamped to the smallest class count with a warning.
    """
    labels = np.asarray(getattr(y, "labels", y), dtype=np.int64)
    train = np.asarray(train_indices, dtype=np.intp)
    if n_classes is None:
        n_classes = getattr(y, "n_classes", None) or int(labels.max()) + 1
    if k < 1:
        raise ValueError("k must be positive")
    per_class = [train[labels[train] == c] for c in range(n_classes)]
    missing = [c for c, idx in enumerate(per_class) if len(idx) == 0]
    if missing:
        raise MissingClassError(f"classes {missing} have no training samples")
    k_eff = min(k, min(len(idx) for idx in per_class))
    if k_eff < k:
        warnings.warn(f"support size clamped from {k} to {k_eff} (smallest class)", SupportClampWarning, stacklevel=2)
    chosen = []
    for c, idx in enumerate(per_class):
        pick = rng.generator(seed, "support", c).choice(len(idx), size=k_eff, replace=False)
        chosen.append(np.sort(idx[pick]))
    return BalancedSupport(tuple(chosen), k_eff)


def _ball_sample(g: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    v = g.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * g.uniform(size=n) ** (1.0 / dim)
    return clip_to_ball(v * r[:, None], radius)


@dataclass(frozen=True)
class PrototypeModel:
    feature_map: FeatureMap
    prototypes: np.ndarray
    residuals: np.ndarray
    residual_bound: float
    biases: np.ndarray
    k: int
    residual_seed: int = 0

    @property
    def n_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.prototypes + self.residuals

    def decision_scores(self, x: np.ndarray) -> np.ndarray:
        return decision_scores(self, x)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(decision_scores(self, x), axis=-1)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return posterior(self, x)

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "feature_map": self.feature_map.to_dict(),
            "prototypes": self.prototypes.tolist(),
            "residuals": self.residuals.tolist(),
            "residual_bound": self.residual_bound,
            "biases": self.biases.tolist(),
            "B": self.feature_map.bound,
            "k": self.k,
            "seeds": {"feature_map": self.feature_map.seed, "residual": self.residual_seed},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> PrototypeModel:
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported prototype model version {d.get('version')!r}")
        return cls(
            FeatureMap.from_dict(d["feature_map"]),
            np.asarray(d["prototypes"], dtype=float),
            np.asarray(d["residuals"], dtype=float),
            float(d["residual_bound"]),
            np.asarray(d["biases"], dtype=float),
            int(d["k"]),
            int(d["seeds"]["residual"]),
        )


def fit_prototypes(
    fm: FeatureMap,
    support: BalancedSupport,
    data: np.ndarray,
    rho: float = 0.0,
    residual_seed: int = 0,
    bias: str = "zero",
) -> PrototypeModel:
    """Class means of the mapped support, plus residuals drawn uniformly from
    the ``rho``-ball.

    ``bias="zero"`` gives ``b_c = 0``; ``bias="half_norm"`` uses
    ``-||mu_c||^2 / 2`` (nearest-centroid form). Both depend on the support
    alone.
    """
    if rho < 0:
        raise ValueError("rho must be non-negative")
    data = np.asarray(data, dtype=float)
    protos = []
    for c, idx in enumerate(support.indices):
        if len(idx) == 0:
            raise MissingClassError(f"class {c} has an empty support")
        if len(idx) != support.k:
            raise ValueError(f"class {c} support has {len(idx)} rows, expected {support.k}")
        protos.append(fm(data[idx]).mean(axis=0))
    mu = np.vstack(protos)
    C, p = mu.shape
    if rho > 0:
        res = _ball_sample(rng.generator(residual_seed, "residual"), C, p, rho)
    else:
        res = np.zeros_like(mu)
    if bias == "zero":
        b = np.zeros(C)
    elif bias == "half_norm":
        b = -0.5 * np.einsum("ij,ij->i", mu, mu)
    else:
        raise ValueError(f"unknown bias rule {bias!r}")
    return PrototypeModel(fm, mu, res, float(rho), b, support.k, residual_seed)


def decision_scores(model: PrototypeModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite input")
    return model.feature_map(x) @ model.weights.T + model.biases


def posterior(model: PrototypeModel, x: np.ndarray) -> np.ndarray:
    s = decision_scores(model, x)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ProtoClassifier:
    """Convenience wrapper: balanced support -> feature map -> prototypes."""

    k: int | None = None
    k_cap: int = 64
    p: int | None = None
    p_cap: int = 64
    bound: float = 1.0
    rho: float = 0.0
    bias: str = "zero"
    seed: int = 0
    model_: PrototypeModel | None = field(default=None, repr=False)

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int | None = None) -> ProtoClassifier:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        n_classes = n_classes or int(y.max()) + 1
        counts = np.bincount(y, minlength=n_classes)
        k = self.k if self.k is not None else int(min(counts.min(), self.k_cap))
        with warnings.catch_warnings():
            if self.k is None:
                warnings.simplefilter("ignore", SupportClampWarning)
            support = build_balanced_support(y, np.arange(len(y)), max(k, 1), self.seed, n_classes)
        rows = X[support.all_indices()]
        p = self.p if self.p is not None else min(self.p_cap, len(rows) - 1)
        fm = fit_feature_map(rows, p, self.bound, self.seed)
        self.model_ = fit_prototypes(fm, support, X, self.rho, self.seed, self.bias)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return posterior(self.model_, X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.model_.predict(X)
