"""Ingestion, count normalization, feature filtering and stratified splits.

Matrices are samples x features. Count-based steps (``logcpm``,
``filter_low_expression``) treat each row as one library.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .errors import (
    AlignmentError,
    DegenerateError,
    DomainError,
    EmptyResultError,
    ParseError,
)

log = logging.getLogger(__name__)

SPLIT_VERSION = 1


class StratificationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExpressionMatrix:
    sample_ids: list[str]
    feature_names: list[str]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must be a 2-D array")
        if v.shape != (len(self.sample_ids), len(self.feature_names)):
            raise ValueError(
                f"shape {v.shape} does not match {len(self.sample_ids)} samples "
                f"x {len(self.feature_names)} features"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("feature names must be unique")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def take_features(self, cols: Sequence[int] | np.ndarray) -> ExpressionMatrix:
        cols = np.asarray(cols, dtype=np.intp)
        return ExpressionMatrix(
            list(self.sample_ids),
            [self.feature_names[i] for i in cols],
            self.values[:, cols],
        )

    def take_samples(self, rows: Sequence[int] | np.ndarray) -> ExpressionMatrix:
        rows = np.asarray(rows, dtype=np.intp)
        return ExpressionMatrix(
            [self.sample_ids[i] for i in rows],
            list(self.feature_names),
            self.values[rows],
        )

    def to_csv(self, path: str | Path, delimiter: str = ",") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(["sample_id", *self.feature_names])
            for sid, row in zip(self.sample_ids, self.values):
                w.writerow([sid, *(repr(float(x)) for x in row)])


@dataclass(frozen=True)
class LabelSet:
    sample_ids: list[str]
    labels: np.ndarray
    class_names: list[str]

    def __post_init__(self):
        y = np.asarray(self.labels, dtype=np.int64)
        if y.ndim != 1 or len(y) != len(self.sample_ids):
            raise ValueError("labels must be a 1-D array aligned with sample_ids")
        if len(y) and (y.min() < 0 or y.max() >= len(self.class_names)):
            raise ValueError("label outside class map")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_names(cls, sample_ids: Sequence[str], names: Sequence[str]) -> LabelSet:
        uniq = sorted(set(names), key=_class_sort_key)
        index = {n: i for i, n in enumerate(uniq)}
        return cls(list(sample_ids), np.array([index[n] for n in names], dtype=np.int64), uniq)

    @classmethod
    def from_ids(cls, labels: Sequence[int], n_classes: int | None = None) -> LabelSet:
        y = np.asarray(labels, dtype=np.int64)
        c = int(n_classes if n_classes is not None else y.max() + 1)
        return cls([str(i) for i in range(len(y))], y, [str(i) for i in range(c)])

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def class_map(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.class_names)}

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, rows: Sequence[int] | np.ndarray) -> LabelSet:
        rows = np.asarray(rows, dtype=np.intp)
        return LabelSet([self.sample_ids[i] for i in rows], self.labels[rows], list(self.class_names))


def _class_sort_key(name: str):
    # numeric labels sort numerically, everything else lexically
    try:
        return (0, float(name), name)
    except ValueError:
        return (1, 0.0, name)


@dataclass
class SplitPlan:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int
    fold_assignments: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_folds(self) -> int:
        return 0 if self.fold_assignments is None else int(self.fold_assignments.max()) + 1

    def fold(self, f: int) -> tuple[np.ndarray, np.ndarray]:
        """(train, held-out) indices for fold ``f``."""
        if self.fold_assignments is None:
            raise ValueError("plan has no folds")
        held = np.flatnonzero(self.fold_assignments == f)
        train = np.flatnonzero(self.fold_assignments != f)
        return train, held

    def to_dict(self) -> dict:
        return {
            "version": SPLIT_VERSION,
            "seed": int(self.seed),
            "train_indices": [int(i) for i in self.train_indices],
            "test_indices": [int(i) for i in self.test_indices],
            "folds": None if self.fold_assignments is None else [int(f) for f in self.fold_assignments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> SplitPlan:
        folds = d.get("folds")
        return cls(
            np.asarray(d["train_indices"], dtype=np.intp),
            np.asarray(d["test_indices"], dtype=np.intp),
            int(d["seed"]),
            None if folds is None else np.asarray(folds, dtype=np.intp),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------- ingestion


def _sniff_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def _read_rows(path: Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.strip():
            raise ParseError("empty or missing header", line=1, path=str(path))
        delim = _sniff_delimiter(first)
        fh.seek(0)
        reader = csv.reader(fh, delimiter=delim)
        header = next(reader)
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            rows.append((reader.line_num, row))
    return [h.strip() for h in header], rows


def load_matrix(
    path: str | Path,
    label_path: str | Path,
    missing: str = "drop_features",
) -> tuple[ExpressionMatrix, LabelSet]:
    """Read a samples x features table and its labels, aligned by sample id.

    The matrix file has a header of feature names after a leading sample-id
    column; the label file has columns ``sample_id,label``. Comma or tab is
    detected from the header line. Samples without a label are dropped;
    features with an empty or non-numeric-NA cell are dropped
    (``missing="drop_samples"`` drops the offending samples instead).
    """
    path, label_path = Path(path), Path(label_path)
    if missing not in ("drop_features", "drop_samples"):
        raise ValueError(f"unknown missing-value policy {missing!r}")

    header, rows = _read_rows(path)
    if len(header) < 2:
        raise ParseError("header needs a sample-id column and at least one feature", line=1, path=str(path))
    features = header[1:]
    if any(not f for f in features):
        raise ParseError("blank feature name in header", line=1, path=str(path))
    seen: set[str] = set()
    for f in features:
        if f in seen:
            raise ParseError(f"duplicate feature name {f!r}", line=1, path=str(path))
        seen.add(f)

    sample_ids: list[str] = []
    values = np.empty((len(rows), len(features)))
    for r, (lineno, row) in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=lineno, path=str(path))
        sample_ids.append(row[0].strip())
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "" or cell.upper() in ("NA", "NAN"):
                values[r, j] = np.nan
                continue
            try:
                values[r, j] = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r} in column {features[j]!r}", line=lineno, path=str(path)) from None
    if len(set(sample_ids)) != len(sample_ids):
        raise ParseError("duplicate sample ids", path=str(path))

    lab_header, lab_rows = _read_rows(label_path)
    if len(lab_header) < 2 or lab_header[0].lower() != "sample_id":
        raise ParseError("label header must start with sample_id,label", line=1, path=str(label_path))
    label_of: dict[str, str] = {}
    for lineno, row in lab_rows:
        if len(row) < 2:
            raise ParseError("expected sample_id,label", line=lineno, path=str(label_path))
        label_of[row[0].strip()] = row[1].strip()

    keep = [i for i, s in enumerate(sample_ids) if s in label_of]
    if not keep:
        raise AlignmentError(f"no sample ids shared between {path} and {label_path}")
    dropped = len(sample_ids) - len(keep)
    if dropped:
        warnings.warn(f"dropped {dropped} samples without a label", stacklevel=2)
    values = values[keep]
    sample_ids = [sample_ids[i] for i in keep]

    bad = ~np.isfinite(values)
    if bad.any():
        if missing == "drop_features":
            cols = np.flatnonzero(~bad.any(axis=0))
            log.info("dropping %d features with missing values", values.shape[1] - len(cols))
            values = values[:, cols]
            features = [features[j] for j in cols]
        else:
            rws = np.flatnonzero(~bad.any(axis=1))
            log.info("dropping %d samples with missing values", values.shape[0] - len(rws))
            values = values[rws]
            sample_ids = [sample_ids[i] for i in rws]
        if values.size == 0:
            raise EmptyResultError("no data left after dropping missing values")

    m = ExpressionMatrix(sample_ids, features, values)
    y = LabelSet.from_names(sample_ids, [label_of[s] for s in sample_ids])
    return m, y


def write_labels(y: LabelSet, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "label"])
        for sid, lab in zip(y.sample_ids, y.labels):
            w.writerow([sid, y.class_names[lab]])


# ------------------------------------------------------------ normalization


def _library_sizes(m: ExpressionMatrix) -> np.ndarray:
    v = m.values
    if (v < 0).any():
        r, c = np.argwhere(v < 0)[0]
        raise DomainError(f"negative count in sample {m.sample_ids[r]!r}, feature {m.feature_names[c]!r}")
    lib = v.sum(axis=1)
    zero = np.flatnonzero(lib == 0)
    if len(zero):
        raise DegenerateError(f"sample {m.sample_ids[zero[0]]!r} has zero library size")
    return lib


def cpm(m: ExpressionMatrix) -> np.ndarray:
    lib = _library_sizes(m)
    return 1e6 * m.values / lib[:, None]


def logcpm(m: ExpressionMatrix) -> ExpressionMatrix:
    """log2(1 + counts-per-million), row-wise."""
    return ExpressionMatrix(list(m.sample_ids), list(m.feature_names), np.log2(1.0 + cpm(m)))


def low_expression_mask(m: ExpressionMatrix, cpm_threshold: float = 1.0, min_fraction: float = 0.10) -> np.ndarray:
    n = m.shape[0]
    # guard the ceil against 0.1 * 30 == 3.0000000000000004
    need = max(1, math.ceil(min_fraction * n - 1e-9))
    return (cpm(m) > cpm_threshold).sum(axis=0) >= need


def filter_low_expression(m: ExpressionMatrix, cpm_threshold: float = 1.0, min_fraction: float = 0.10) -> ExpressionMatrix:
    """Keep features with CPM > ``cpm_threshold`` in at least
    ``ceil(min_fraction * n_samples)`` samples. Column order is preserved."""
    keep = np.flatnonzero(low_expression_mask(m, cpm_threshold, min_fraction))
    if len(keep) == 0:
        raise EmptyResultError("low-expression filter removed every feature")
    return m.take_features(keep)


def top_variance_order(values: np.ndarray, n_keep: int) -> np.ndarray:
    if n_keep <= 0:
        raise ValueError("n_keep must be positive")
    if n_keep > values.shape[1]:
        raise ValueError(f"n_keep={n_keep} exceeds {values.shape[1]} features")
    var = values.var(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1])
    return np.argsort(-var, kind="stable")[:n_keep]


def select_top_variance(m: ExpressionMatrix, n_keep: int) -> ExpressionMatrix:
    """The ``n_keep`` highest-variance features, in descending variance order
    (ties keep original column order)."""
    return m.take_features(top_variance_order(m.values, n_keep))


# ------------------------------------------------------------------ splits


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-12))


def _as_labels(y) -> np.ndarray:
    return y.labels if isinstance(y, LabelSet) else np.asarray(y, dtype=np.int64)


def stratified_split(y, test_fraction: float = 0.25, seed: int = 0) -> SplitPlan:
    """Per-class shuffled train/test split.

    Each class contributes ``round_half_up(test_fraction * n_c)`` test samples,
    clamped to ``[1, n_c - 1]``. Singleton classes go to train with a warning.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    labels = _as_labels(y)
    train, test, notes = [], [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n_c = len(idx)
        if n_c < 2:
            msg = f"class {c} has {n_c} sample; placed in train"
            warnings.warn(msg, StratificationWarning, stacklevel=2)
            notes.append(msg)
            train.extend(idx)
            continue
        n_test = min(max(_round_half_up(test_fraction * n_c), 1), n_c - 1)
        perm = rng.generator(seed, "split", int(c)).permutation(n_c)
        test.extend(idx[perm[:n_test]])
        train.extend(idx[perm[n_test:]])
    return SplitPlan(np.sort(np.asarray(train, dtype=np.intp)), np.sort(np.asarray(test, dtype=np.intp)), seed, None, notes)


def stratified_kfold(y, k: int = 5, seed: int = 0) -> SplitPlan:
    """Assign every sample to one of ``k`` folds, class by class.

    Each class is shuffled and dealt round-robin; the starting fold rotates
    with the running sample count so total fold sizes stay within one.
    """
    labels = _as_labels(y)
    n = len(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples ({n})")
    folds = np.empty(n, dtype=np.intp)
    offset = 0
    notes = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            msg = f"class {c} has {len(idx)} samples, fewer than k={k}"
            warnings.warn(msg, StratificationWarning, stacklevel=2)
            notes.append(msg)
        perm = rng.generator(seed, "kfold", int(c)).permutation(len(idx))
        folds[idx[perm]] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    all_idx = np.arange(n, dtype=np.intp)
    return SplitPlan(all_idx, np.empty(0, dtype=np.intp), seed, folds, notes)
