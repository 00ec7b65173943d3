"""Classification metrics: confusion counts, per-class rates, balanced
accuracy and the Mann-Whitney AUC with midranks for ties.

Rates whose denominator is zero are reported as ``None`` and counted in
``undefined``; macro averages skip them.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

TABLE_COLUMNS = ("Model", "Accuracy", "AUC", "F1", "PPV", "Sensitivity", "Specificity")


class UndefinedMetricError(ValueError):
    pass


def confusion_matrix(y_true, y_pred, n_classes: int | None = None) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError("y_true and y_pred differ in length")
    C = int(n_classes if n_classes is not None else max(t.max(), p.max()) + 1)
    if t.min() < 0 or p.min() < 0 or t.max() >= C or p.max() >= C:
        raise ValueError("label outside [0, n_classes)")
    cm = np.zeros((C, C), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


@dataclass
class MetricsReport:
    n: int
    n_classes: int
    accuracy: float
    balanced_accuracy: float
    recall: list[float | None]
    specificity: list[float | None]
    ppv: list[float | None]
    f1: list[float | None]
    support: list[int]
    confusion: np.ndarray
    auc: float | None = None
    positive_class: int | None = None
    undefined: dict[str, int] = field(default_factory=dict)

    def summary(self, positive: int | None = None) -> dict:
        """Table-style numbers for one positive class (binary default: 1)."""
        pos = positive if positive is not None else (self.positive_class if self.positive_class is not None else 1)
        if self.n_classes > 2 and positive is None:
            # multiclass: macro averages over defined values
            def macro(v):
                vals = [x for x in v if x is not None]
                return float(np.mean(vals)) if vals else None

            return {
                "Accuracy": self.accuracy,
                "AUC": None,
                "F1": macro(self.f1),
                "PPV": macro(self.ppv),
                "Sensitivity": macro(self.recall),
                "Specificity": macro(self.specificity),
                "BalancedAccuracy": self.balanced_accuracy,
            }
        return {
            "Accuracy": self.accuracy,
            "AUC": self.auc,
            "F1": self.f1[pos],
            "PPV": self.ppv[pos],
            "Sensitivity": self.recall[pos],
            "Specificity": self.specificity[pos],
            "BalancedAccuracy": self.balanced_accuracy,
        }

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_classes": self.n_classes,
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "auc": self.auc,
            "positive_class": self.positive_class,
            "per_class": {
                "recall": self.recall,
                "specificity": self.specificity,
                "ppv": self.ppv,
                "f1": self.f1,
                "support": self.support,
            },
            "confusion": self.confusion.tolist(),
            "undefined": self.undefined,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def build_report(y_true, y_pred, scores=None, n_classes: int | None = None, positive_class: int = 1) -> MetricsReport:
    """All per-class and aggregate metrics for one set of predictions.

    ``scores`` (binary only) are positive-class scores used for the AUC.
    """
    t = np.asarray(y_true, dtype=np.int64)
    if t.size == 0:
        raise ValueError("empty input")
    cm = confusion_matrix(t, y_pred, n_classes)
    C = cm.shape[0]
    n = int(cm.sum())
    tp = np.diag(cm)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp
    tn = n - tp - fn - fp
    recall = [_ratio(int(tp[c]), int(tp[c] + fn[c])) for c in range(C)]
    spec = [_ratio(int(tn[c]), int(tn[c] + fp[c])) for c in range(C)]
    ppv = [_ratio(int(tp[c]), int(tp[c] + fp[c])) for c in range(C)]
    f1 = []
    for c in range(C):
        # 2TP / (2TP + FP + FN) equals the harmonic mean of PPV and recall
        f1.append(_ratio(2 * int(tp[c]), 2 * int(tp[c]) + int(fp[c]) + int(fn[c])))
    undefined = {
        name: sum(v is None for v in vals)
        for name, vals in (("recall", recall), ("specificity", spec), ("ppv", ppv), ("f1", f1))
    }
    defined_recall = [r for r in recall if r is not None]
    auc = None
    if scores is not None:
        if C != 2:
            raise ValueError("AUC is only reported for binary tasks")
        auc = binary_auc(t == positive_class, scores)
    return MetricsReport(
        n=n,
        n_classes=C,
        accuracy=float(tp.sum() / n),
        balanced_accuracy=float(np.mean(defined_recall)),
        recall=recall,
        specificity=spec,
        ppv=ppv,
        f1=f1,
        support=[int(s) for s in cm.sum(axis=1)],
        confusion=cm,
        auc=auc,
        positive_class=positive_class if C == 2 else None,
        undefined=undefined,
    )


def binary_auc(y_true, scores) -> float:
    """P(score+ > score-) + P(score+ == score-) / 2 via midranks."""
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def balanced_accuracy(y_true, y_pred, n_classes: int | None = None) -> float:
    return build_report(y_true, y_pred, n_classes=n_classes).balanced_accuracy


def table_rows_csv(rows: list[dict], columns=TABLE_COLUMNS + ("BalancedAccuracy",)) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (f"{r[c]:.4f}" if isinstance(r[c], float) else r[c]) for c in columns])
    return buf.getvalue()
