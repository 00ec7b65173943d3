"""Standardization and PCA with a deterministic basis.

Every fitted transform carries a :class:`Provenance` naming the rows it was
fitted on. :func:`check_disjoint` is the leakage guard used by the pipeline
before a transform scores held-out rows.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import LeakageError

PCA_VERSION = 1


class ConstantColumnWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Provenance:
    tag: str = "unspecified"
    fit_ids: frozenset = field(default_factory=frozenset)

    @property
    def digest(self) -> str:
        h = hashlib.sha256("\n".join(sorted(map(str, self.fit_ids))).encode())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"tag": self.tag, "n_fit": len(self.fit_ids), "fit_digest": self.digest}


def check_disjoint(prov: Provenance, scored_ids: Iterable) -> None:
    overlap = prov.fit_ids.intersection(scored_ids)
    if overlap:
        some = sorted(map(str, overlap))[:3]
        raise LeakageError(f"transform {prov.tag!r} was fitted on {len(overlap)} of the scored rows (e.g. {some})")


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray
    ddof: int = 1
    provenance: Provenance = field(default_factory=Provenance)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if rows.shape[-1] != len(self.means):
            raise ValueError(f"expected {len(self.means)} columns, got {rows.shape[-1]}")
        return (rows - self.means) / self.stds

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "ddof": self.ddof,
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, provenance: Provenance | None = None) -> Standardizer:
        return cls(
            np.asarray(d["means"], dtype=float),
            np.asarray(d["stds"], dtype=float),
            int(d.get("ddof", 1)),
            provenance or Provenance(d.get("provenance", {}).get("tag", "unspecified")),
        )


def fit_standardizer(train: np.ndarray, provenance: Provenance | None = None) -> Standardizer:
    """Column means and sample standard deviations (n - 1 denominator).

    Zero-variance columns get std 1, so they map to exactly 0.
    """
    x = np.asarray(getattr(train, "values", train), dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 training rows to standardize")
    means = x.mean(axis=0)
    stds = x.std(axis=0, ddof=1)
    const = stds == 0
    if const.any():
        warnings.warn(f"{int(const.sum())} constant columns; std set to 1", ConstantColumnWarning, stacklevel=2)
        stds = np.where(const, 1.0, stds)
    return Standardizer(means, stds, 1, provenance or Provenance())


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    n_train: int
    provenance: Provenance = field(default_factory=Provenance)

    @property
    def n_pcs(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return pca_transform(self, rows)

    def inverse_transform(self, scores: np.ndarray) -> np.ndarray:
        return np.asarray(scores) @ self.components + self.mean

    def to_dict(self) -> dict:
        return {
            "version": PCA_VERSION,
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "n_train": self.n_train,
            "provenance": self.provenance.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, provenance: Provenance | None = None) -> PcaModel:
        if d.get("version") != PCA_VERSION:
            raise ValueError(f"unsupported PCA model version {d.get('version')!r}")
        p = d.get("provenance", {})
        return cls(
            np.asarray(d["mean"], dtype=float),
            np.asarray(d["components"], dtype=float).reshape(-1, len(d["mean"])),
            np.asarray(d["explained_variance"], dtype=float),
            int(d["n_train"]),
            provenance or Provenance(p.get("tag", "unspecified")),
        )


def max_pcs(n_train: int, dim: int) -> int:
    return max(0, min(n_train - 1, dim))


def orient_rows(vecs: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive (first such
    entry on ties)."""
    vecs = np.array(vecs, dtype=float, copy=True)
    if vecs.size == 0:
        return vecs
    lead = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(len(vecs)), lead])
    signs[signs == 0] = 1.0
    return vecs * signs[:, None]


def fit_pca(train_scaled: np.ndarray, n_pcs: int, provenance: Provenance | None = None) -> PcaModel:
    """Top ``n_pcs`` principal axes from a thin SVD of the centered rows.

    Explained variance is ``s**2 / (n - 1)``. Components with bitwise-equal
    variance are ordered by the index of their dominant axis.
    """
    x = np.asarray(train_scaled, dtype=float)
    if x.ndim != 2:
        raise ValueError("train_scaled must be 2-D")
    n, d = x.shape
    bound = max_pcs(n, d)
    if n_pcs < 1 or n_pcs > bound:
        raise ValueError(f"n_pcs={n_pcs} outside [1, min(n_train - 1, d)] = [1, {bound}]")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s**2 / (n - 1)
    vt = orient_rows(vt)
    lead = np.argmax(np.abs(vt), axis=1)
    order = np.lexsort((lead, -var))
    vt, var = vt[order], var[order]
    return PcaModel(mean, vt[:n_pcs].copy(), var[:n_pcs].copy(), n, provenance or Provenance())


def pca_transform(model: PcaModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.shape[-1] != model.dim:
        raise ValueError(f"expected {model.dim} columns, got {rows.shape[-1]}")
    return (rows - model.mean) @ model.components.T
