# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``_pykernels`` one-to-one."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def domination_counts(F):
    cdef double[:, ::1] f = np.ascontiguousarray(F, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t m = f.shape[1] if f.ndim == 2 and n > 0 else 0
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t a, b, s
    cdef bint ge_ab, gt_ab, ge_ba, gt_ba
    for a in range(n):
        for b in range(a + 1, n):
            ge_ab = True
            gt_ab = False
            ge_ba = True
            gt_ba = False
            for s in range(m):
                if f[a, s] < f[b, s]:
                    ge_ab = False
                    gt_ba = True
                elif f[a, s] > f[b, s]:
                    ge_ba = False
                    gt_ab = True
            if ge_ab and gt_ab:
                counts[b] += 1
            elif ge_ba and gt_ba:
                counts[a] += 1
    return counts_arr


def edit_distance(str a, str b):
    if len(a) < len(b):
        a, b = b, a
    cdef Py_ssize_t la = len(a), lb = len(b)
    if lb == 0:
        return la
    cdef Py_ssize_t[::1] prev = np.arange(lb + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] cur = np.zeros(lb + 1, dtype=np.intp)
    cdef Py_ssize_t i, j, cost, best
    cdef Py_UCS4 ca
    for i in range(1, la + 1):
        ca = a[i - 1]
        cur[0] = i
        for j in range(1, lb + 1):
            cost = 0 if ca == b[j - 1] else 1
            best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            if prev[j - 1] + cost < best:
                best = prev[j - 1] + cost
            cur[j] = best
        prev, cur = cur, prev
    return int(prev[lb])


def strongest_paths(absW, order):
    cdef double[:, ::1] w = np.ascontiguousarray(absW, dtype=np.float64)
    cdef Py_ssize_t d = w.shape[0]
    best_arr = np.zeros((d, d), dtype=np.float64)
    nxt_arr = np.full((d, d), -1, dtype=np.int64)
    cdef double[:, ::1] best = best_arr
    cdef long long[:, ::1] nxt = nxt_arr
    cdef long long[::1] ordv = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t k, s, c, t
    cdef double wc, cand
    for k in range(ordv.shape[0] - 1, -1, -1):
        s = ordv[k]
        best[s, s] = 1.0
        for c in range(d):
            wc = w[s, c]
            if wc <= 0.0:
                continue
            for t in range(d):
                if t == s:
                    continue
                cand = wc * best[c, t]
                if cand > best[s, t]:
                    best[s, t] = cand
                    nxt[s, t] = c
    for s in range(d):
        best[s, s] = 0.0
    return best_arr, nxt_arr
