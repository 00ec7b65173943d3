"""NumPy implementations of the GBDT hot loops.

Same contract and the same floating-point operation order as the compiled
``_kernels`` module, so both backends return bit-identical splits:

* candidates are scanned feature by feature (ascending id), then by
  ascending threshold; a later candidate wins only on a strictly larger gain;
* node samples are visited in the stable sort order of each feature, so
  equal values are visited by ascending row index;
* left sums are accumulated sequentially in that order.
"""

from __future__ import annotations

import numpy as np


def best_split(Xt, order, node_mask, node_idx, g, h, G, H, lam, gamma, min_child_hessian, features):
    """Best exact-greedy split of one node.

    Returns ``(gain, feature, threshold)``; ``feature == -1`` when no
    candidate is admissible. Rows with ``x <= threshold`` go left.
    """
    if len(node_idx) < 2 or len(features) == 0:
        return -np.inf, -1, 0.0
    xn = Xt[features][:, node_idx]
    o = np.argsort(xn, axis=1, kind="stable")
    xs = np.take_along_axis(xn, o, axis=1)
    gl = np.cumsum(g[node_idx][o], axis=1)[:, :-1]
    hl = np.cumsum(h[node_idx][o], axis=1)[:, :-1]
    gr = G - gl
    hr = H - hl
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - G * G / (H + lam)) - gamma
    ok = (xs[:, 1:] > xs[:, :-1]) & (hl >= min_child_hessian) & (hr >= min_child_hessian)
    ok &= (hl + lam > 0) & (hr + lam > 0)
    gain = np.where(ok, gain, -np.inf)
    flat = int(np.argmax(gain))
    fi, pos = divmod(flat, gain.shape[1])
    best = float(gain[fi, pos])
    if best == -np.inf:
        return -np.inf, -1, 0.0
    lo, hi = xs[fi, pos], xs[fi, pos + 1]
    thr = 0.5 * (lo + hi)
    if thr >= hi:
        thr = lo
    return best, int(features[fi]), float(thr)


def apply_tree(X, feature, threshold, left, right):
    """Leaf node id reached by every row of ``X``."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.intp)
    active = np.flatnonzero(feature[node] >= 0)
    while len(active):
        cur = node[active]
        go_left = X[active, feature[cur]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = active[feature[node[active]] >= 0]
    return node
