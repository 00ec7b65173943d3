# cython: language_level=3
"""Compiled GBDT hot loops. Contract documented in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def best_split(const double[:, ::1] Xt, const cnp.intp_t[:, ::1] order,
               const unsigned char[::1] node_mask, node_idx,
               const double[::1] g, const double[::1] h,
               double G, double H, double lam, double gamma,
               double min_child_hessian, const cnp.intp_t[::1] features):
    cdef Py_ssize_t n = Xt.shape[1]
    cdef Py_ssize_t nf = features.shape[0]
    cdef Py_ssize_t fi, t, f, i
    cdef double gl, hl, gr, hr, gain, x, prev_x, parent
    cdef double best = -INFINITY, best_lo = 0.0, best_hi = 0.0
    cdef Py_ssize_t best_f = -1
    cdef bint have_prev
    if len(node_idx) < 2 or nf == 0:
        return -np.inf, -1, 0.0
    parent = G * G / (H + lam)
    with nogil:
        for fi in range(nf):
            f = features[fi]
            gl = 0.0
            hl = 0.0
            have_prev = False
            prev_x = 0.0
            for t in range(n):
                i = order[f, t]
                if not node_mask[i]:
                    continue
                x = Xt[f, i]
                if have_prev and x > prev_x:
                    gr = G - gl
                    hr = H - hl
                    if (hl >= min_child_hessian and hr >= min_child_hessian
                            and hl + lam > 0 and hr + lam > 0):
                        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - gamma
                        if gain > best:
                            best = gain
                            best_f = f
                            best_lo = prev_x
                            best_hi = x
                gl = gl + g[i]
                hl = hl + h[i]
                prev_x = x
                have_prev = True
    if best_f < 0:
        return -np.inf, -1, 0.0
    thr = 0.5 * (best_lo + best_hi)
    if thr >= best_hi:
        thr = best_lo
    return best, int(best_f), float(thr)


def apply_tree(const double[:, ::1] X, const cnp.intp_t[::1] feature,
               const double[::1] threshold, const cnp.intp_t[::1] left,
               const cnp.intp_t[::1] right):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t r, node
    out = np.empty(n, dtype=np.intp)
    cdef cnp.intp_t[::1] o = out
    with nogil:
        for r in range(n):
            node = 0
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            o[r] = node
    return out
