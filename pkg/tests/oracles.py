"""Slow, independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np


def jacobi_eigh(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations on a symmetric matrix. Returns (values, vectors
    as columns), values in descending order."""
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    vals = np.diag(a)
    order = np.argsort(-vals, kind="stable")
    return vals[order], v[:, order]


def pair_auc(y, scores) -> float:
    """Count every positive/negative pair."""
    pos = [s for s, t in zip(scores, y) if t]
    neg = [s for s, t in zip(scores, y) if not t]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def brute_best_split(x, g, h, lam, gamma=0.0, min_child_hessian=0.0):
    """Try every threshold between distinct sorted values of a 1-D feature."""
    x = np.asarray(x, dtype=float)
    G, H = float(np.sum(g)), float(np.sum(h))
    best = (-math.inf, None)
    values = sorted(set(x.tolist()))
    for lo, hi in zip(values, values[1:]):
        thr = (lo + hi) / 2
        left = x <= thr
        gl, hl = float(np.sum(np.asarray(g)[left])), float(np.sum(np.asarray(h)[left]))
        gr, hr = G - gl, H - hl
        if hl < min_child_hessian or hr < min_child_hessian:
            continue
        gain = 0.5 * (gl**2 / (hl + lam) + gr**2 / (hr + lam) - G**2 / (H + lam)) - gamma
        if gain > best[0]:
            best = (gain, thr)
    return best


def cells_from_indicators(indicators: np.ndarray) -> np.ndarray:
    """Counts of the 8 outcomes, index 4h + 2l + x."""
    idx = 4 * indicators[:, 0] + 2 * indicators[:, 1] + indicators[:, 2]
    return np.bincount(idx.astype(int), minlength=8)


def majority_error_from_cells(cells) -> float:
    total = sum(cells)
    bad = sum(c for i, c in enumerate(cells) if bin(i).count("1") >= 2)
    return bad / total


def all_indicator_patterns():
    return list(itertools.product((0, 1), repeat=3))


def logloss_grad_hess(F, y):
    """Per-output gradient and diagonal hessian of the log-loss: sigmoid for
    one output column, softmax otherwise."""
    y = np.asarray(y)
    if F.shape[1] == 1:
        p = 1.0 / (1.0 + np.exp(-F))
        t = (y == 1).astype(float)[:, None]
    else:
        e = np.exp(F - F.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        t = (y[:, None] == np.arange(F.shape[1])).astype(float)
    return p - t, p * (1.0 - p)


def replay_leaf_weights(model, X, y):
    """Recompute every leaf weight from the gradients routed to it."""
    K = model.n_outputs
    F = np.tile(model.base_score, (len(y), 1))
    lam = model.config.lambda_l2
    worst = 0.0
    for r in range(len(model.trees[0])):
        g, h = logloss_grad_hess(F, y)
        for k in range(K):
            tree = model.trees[k][r]
            leaf_of = tree.apply(X)
            for leaf in tree.leaves:
                sel = leaf_of == leaf
                w = -g[sel, k].sum() / (h[sel, k].sum() + lam)
                worst = max(worst, abs(w - tree.value[leaf]))
            F[:, k] += model.config.learning_rate * tree.value[leaf_of]
    return worst
