"""Three-way hard vote and the class-wise error algebra around it.

Voters are ordered (H, L, X): prototype classifier, leaf-wise GBDT,
depth-wise GBDT. For a class ``c`` the error indicator of voter ``j`` on a
class-``c`` sample is 1 when the voter does not predict ``c``; the ensemble
errs when at least two indicators are 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import ConfigurationError

VOTER_NAMES = ("H", "L", "X")
PAIRS = ((0, 1), (0, 2), (1, 2))
PAIR_NAMES = ("HL", "HX", "LX")


class Voter(Protocol):
    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


@dataclass
class VoterSet:
    voters: Sequence[Voter]
    n_classes: int
    names: tuple[str, ...] = VOTER_NAMES

    def __post_init__(self):
        if len(self.voters) != 3:
            raise ConfigurationError(f"hard vote needs exactly 3 voters, got {len(self.voters)}")

    def posteriors(self, X: np.ndarray) -> np.ndarray:
        """Stacked posteriors, shape (3, n, C)."""
        out = []
        for name, v in zip(self.names, self.voters):
            p = np.asarray(v.predict_proba(X), dtype=float)
            if p.ndim != 2 or p.shape[1] != self.n_classes:
                raise ConfigurationError(f"voter {name} returns {p.shape[-1]} classes, expected {self.n_classes}")
            out.append(p)
        return np.stack(out)

    def predict(self, X: np.ndarray) -> np.ndarray:
        post = self.posteriors(X)
        return vote(np.argmax(post, axis=2).T, post)

    def predict_all(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(base predictions (n, 3), ensemble predictions (n,))."""
        post = self.posteriors(X)
        base = np.argmax(post, axis=2).T
        return base, vote(base, post)


def vote(predictions: np.ndarray, posteriors: np.ndarray | None = None) -> np.ndarray:
    """Majority over rows of ``predictions`` (n, M).

    Rows without a strict majority go to the argmax of the mean posterior;
    remaining exact ties (or no posteriors) go to the lowest class id.
    """
    preds = np.atleast_2d(np.asarray(predictions, dtype=np.int64))
    n, M = preds.shape
    C = int(preds.max()) + 1 if posteriors is None else posteriors.shape[-1]
    counts = np.zeros((n, C), dtype=np.int64)
    for m in range(M):
        np.add.at(counts, (np.arange(n), preds[:, m]), 1)
    top = counts.max(axis=1)
    out = np.argmax(counts, axis=1)
    tied = (counts == top[:, None]).sum(axis=1) > 1
    if tied.any() and posteriors is not None:
        mean_post = np.asarray(posteriors, dtype=float).mean(axis=0)
        out[tied] = np.argmax(mean_post[tied], axis=1)
    return out


def hard_vote(voters: VoterSet, x: np.ndarray) -> int:
    x = np.asarray(x, dtype=float)
    return int(voters.predict(x[None, :] if x.ndim == 1 else x)[0])


# ------------------------------------------------------------ error tables


@dataclass
class ErrorIndicatorTable:
    """Per-sample error indicators ``I[:, j]`` for voters (H, L, X).

    ``flips[:, j]`` (optional) marks samples where voter ``j`` changed its
    decision between two conditions, e.g. before and after a prior shift.
    """

    classes: np.ndarray
    indicators: np.ndarray
    sample_ids: list[str] | None = None
    flips: np.ndarray | None = None
    h_invariant: bool = True

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.int64)
        self.indicators = np.asarray(self.indicators, dtype=np.uint8)
        if self.indicators.ndim != 2 or self.indicators.shape != (len(self.classes), 3):
            raise ValueError("indicators must have shape (n, 3)")
        if not np.isin(self.indicators, (0, 1)).all():
            raise ValueError("indicators must be 0/1")
        if self.flips is not None:
            self.flips = np.asarray(self.flips, dtype=np.uint8)
            if self.flips.shape != self.indicators.shape:
                raise ValueError("flips must match indicators in shape")
        if self.sample_ids is None:
            self.sample_ids = [str(i) for i in range(len(self.classes))]

    @classmethod
    def from_predictions(cls, y_true, base_predictions, sample_ids=None) -> ErrorIndicatorTable:
        y = np.asarray(y_true, dtype=np.int64)
        preds = np.asarray(base_predictions, dtype=np.int64)
        return cls(y, (preds != y[:, None]).astype(np.uint8), sample_ids)

    def rows(self, c: int) -> np.ndarray:
        idx = np.flatnonzero(self.classes == c)
        if len(idx) == 0:
            raise ValueError(f"no samples of class {c}")
        return idx

    def counts(self, c: int) -> dict[str, int]:
        """Integer event counts over class-``c`` samples."""
        I = self.indicators[self.rows(c)].astype(np.int64)
        out = {"n": len(I), "ens": int((I.sum(axis=1) >= 2).sum()), "123": int(I.all(axis=1).sum())}
        for j, name in enumerate(VOTER_NAMES):
            out[name] = int(I[:, j].sum())
        for (a, b), name in zip(PAIRS, PAIR_NAMES):
            out[name] = int((I[:, a] & I[:, b]).sum())
        return out

    def error_rates(self, c: int) -> np.ndarray:
        k = self.counts(c)
        return np.array([k[v] / k["n"] for v in VOTER_NAMES])

    def pair_rates(self, c: int) -> dict[str, float]:
        k = self.counts(c)
        return {p: k[p] / k["n"] for p in PAIR_NAMES}

    def covariances(self, c: int) -> dict[str, float]:
        """Plug-in covariances ``p_jk - e_j e_k``."""
        e = self.error_rates(c)
        pr = self.pair_rates(c)
        return {name: pr[name] - e[a] * e[b] for (a, b), name in zip(PAIRS, PAIR_NAMES)}

    def kappa(self, c: int) -> float:
        return max(0.0, max(self.covariances(c).values()))

    def ensemble_error(self, c: int) -> float:
        k = self.counts(c)
        return k["ens"] / k["n"]

    def balanced_ensemble_error(self) -> float:
        cls = np.unique(self.classes)
        return float(np.mean([self.ensemble_error(int(c)) for c in cls]))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["sample_id", "class", "I_H", "I_L", "I_X"]
            if self.flips is not None:
                head += ["F_H", "F_L", "F_X"]
            w.writerow(head)
            for i, sid in enumerate(self.sample_ids):
                row = [sid, int(self.classes[i]), *map(int, self.indicators[i])]
                if self.flips is not None:
                    row += list(map(int, self.flips[i]))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path) -> ErrorIndicatorTable:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        flips = None
        if rows and "F_H" in rows[0]:
            flips = [[int(r["F_H"]), int(r["F_L"]), int(r["F_X"])] for r in rows]
        return cls(
            [int(r["class"]) for r in rows],
            [[int(r["I_H"]), int(r["I_L"]), int(r["I_X"])] for r in rows],
            [r["sample_id"] for r in rows],
            None if flips is None else np.asarray(flips),
        )


@dataclass(frozen=True)
class VoteDecomposition:
    e_ens: float
    p_HL: float
    p_HX: float
    p_LX: float
    p_123: float
    identity_residual: float
    n: int


def decompose_vote_error(table: ErrorIndicatorTable, c: int) -> VoteDecomposition:
    """Direct ensemble error next to ``p_HL + p_HX + p_LX - 2 p_123``.

    Both sides are formed from integer event counts before the single
    division by ``n``, so the residual is exactly zero on any table.
    """
    k = table.counts(c)
    n = k["n"]
    rhs = k["HL"] + k["HX"] + k["LX"] - 2 * k["123"]
    return VoteDecomposition(
        k["ens"] / n, k["HL"] / n, k["HX"] / n, k["LX"] / n, k["123"] / n,
        abs(k["ens"] - rhs) / n, n,
    )


def decompose_distribution(cells: Sequence) -> tuple:
    """Same identity on a joint law over {0,1}^3, indexed by ``4*I_H + 2*I_L + I_X``.

    Works with floats or :class:`fractions.Fraction` (exact).
    """
    if len(cells) != 8:
        raise ValueError("need 8 cell probabilities")
    p = lambda *bits: cells[4 * bits[0] + 2 * bits[1] + bits[2]]  # noqa: E731
    e_ens = p(1, 1, 0) + p(1, 0, 1) + p(0, 1, 1) + p(1, 1, 1)
    p_hl = p(1, 1, 0) + p(1, 1, 1)
    p_hx = p(1, 0, 1) + p(1, 1, 1)
    p_lx = p(0, 1, 1) + p(1, 1, 1)
    p_123 = p(1, 1, 1)
    return e_ens, p_hl, p_hx, p_lx, p_123, abs(e_ens - (p_hl + p_hx + p_lx - 2 * p_123))


def pairwise_sum_bound(table: ErrorIndicatorTable, c: int) -> float:
    """``p_HL + p_HX + p_LX``, an upper bound on the ensemble error."""
    return float(sum(table.pair_rates(c).values()))


def bounded_dependence_bound(e_H: float, e_L: float, e_X: float, kappa: float) -> float:
    """``e_H e_L + e_H e_X + e_L e_X + 3 kappa``."""
    for v in (e_H, e_L, e_X):
        if not 0.0 <= v <= 1.0:
            raise ValueError("error rates must lie in [0, 1]")
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    return e_H * e_L + e_H * e_X + e_L * e_X + 3.0 * kappa


def independent_vote_error(e_H: float, e_L: float, e_X: float) -> float:
    """Exact ensemble error when the three indicators are independent."""
    return e_H * e_L + e_H * e_X + e_L * e_X - 2.0 * e_H * e_L * e_X


@dataclass(frozen=True)
class ImprovementCheck:
    epsilon: float
    threshold: float
    kappa: float | None = None
    bound: float | None = None
    certified: bool | None = None


def symmetric_improvement_threshold(epsilon: float, kappa: float | None = None) -> ImprovementCheck:
    """Covariance cap below which three voters with common error
    ``epsilon < 1/2`` are guaranteed to beat ``epsilon`` by majority."""
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must be in (0, 1/2)")
    thr = (epsilon - 3.0 * epsilon**2) / 3.0
    if kappa is None:
        return ImprovementCheck(epsilon, thr)
    bound = 3.0 * epsilon**2 + 3.0 * kappa
    return ImprovementCheck(epsilon, thr, kappa, bound, bound < epsilon)


# ------------------------------------------------------------------ flips


@dataclass(frozen=True)
class FlipCheck:
    ens_flip_rate: float
    p_flip: tuple[float, float, float]
    joint_LX_flip_rate: float
    min_pair_bound: float
    product_bound: float
    holds: bool | None
    n: int
    n_split_votes: int
    note: str = ""

    @property
    def sigma_product(self) -> float:
        return math.sqrt(max(self.product_bound * (1 - self.product_bound), 1e-300) / self.n)


def flip_bound_check(table: ErrorIndicatorTable, c: int | None = None) -> FlipCheck:
    """Ensemble flip rate against ``min(p_L_flip, p_X_flip)``.

    A flip toggles a voter's class-``c`` correctness (binary decisions).
    Voter H must never flip. The min bound is guaranteed only on samples
    where the three voters agree before the shift; ``n_split_votes`` counts
    samples where they do not, and the report says so when it is non-zero.
    """
    if table.flips is None:
        raise ValueError("table has no flip indicators")
    rows = np.arange(len(table.classes)) if c is None else table.rows(c)
    I = table.indicators[rows].astype(np.int64)
    Fl = table.flips[rows].astype(np.int64)
    n = len(rows)
    post = I ^ Fl
    ens_flip = float(((I.sum(axis=1) >= 2) != (post.sum(axis=1) >= 2)).mean())
    p = tuple(float(v) for v in Fl.mean(axis=0))
    joint = float((Fl[:, 1] & Fl[:, 2]).mean())
    split = int((I.min(axis=1) != I.max(axis=1)).sum())
    min_b = min(p[1], p[2])
    prod = p[1] * p[2]
    if Fl[:, 0].any() or not table.h_invariant:
        return FlipCheck(ens_flip, p, joint, min_b, prod, None, n, split,
                         "precondition violated: voter H flipped; min-bound check skipped")
    note = ""
    if split:
        note = f"{split} samples without pre-shift agreement; min bound not guaranteed there"
    return FlipCheck(ens_flip, p, joint, min_b, prod, ens_flip <= min_b, n, split, note)
