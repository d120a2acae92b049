# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled clustering kernels.

Same contract as :mod:`erskit._hac_py`. The distance kernel computes every
entry as one sequential dot product (see ``_chordal.h``), so results do not
depend on the number of OpenMP threads or on whether the AVX path is used.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, INFINITY

cnp.import_array()

cdef enum:
    SINGLE = 0
    COMPLETE = 1
    AVERAGE = 2

cdef enum:
    TILE = 64


cdef extern from "_chordal.h" nogil:
    int erskit_use_avx()
    void erskit_dot_block(const double* x, const double* P, Py_ssize_t d,
                          const Py_ssize_t* rows, Py_ssize_t p, int avx, double* out)


cdef inline double _finish(double s) noexcept nogil:
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    s = 2.0 - 2.0 * s
    if s < 0.0:
        s = 0.0
    return sqrt(s)


cdef void _row_block(const double* x, const double* P, double* D, Py_ssize_t i0,
                     Py_ssize_t n, Py_ssize_t d, int avx) noexcept nogil:
    # upper-triangle entries of rows i0 .. i0 + 3
    cdef Py_ssize_t rows[4]
    cdef double out[32]
    cdef Py_ssize_t r, p, jj, j, i
    for r in range(4):
        rows[r] = i0 + r if i0 + r < n else n - 1
        D[rows[r] * n + rows[r]] = 0.0
    p = (i0 + 1) // 4
    while 4 * p < n:
        erskit_dot_block(x, P, d, rows, p, avx, out)
        for r in range(4):
            i = rows[r]
            for jj in range(8):
                j = 4 * p + jj
                if j > i and j < n:
                    D[i * n + j] = _finish(out[r * 8 + jj])
        p += 2


cdef void _mirror_upper(double[:, ::1] D, Py_ssize_t n) noexcept nogil:
    # tiled copy of the upper triangle into the lower one
    cdef Py_ssize_t bi, bj, i, j, iend, jend
    bi = 0
    while bi < n:
        iend = bi + TILE if bi + TILE < n else n
        bj = 0
        while bj <= bi:
            for i in range(bi, iend):
                jend = bj + TILE if bj + TILE < i else i
                for j in range(bj, jend):
                    D[i, j] = D[j, i]
            bj += TILE
        bi += TILE


def pairwise_chordal(X, int workers=1, bint simd=True):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    D_arr = np.empty((n, n), dtype=np.float64)
    if n == 0:
        return D_arr
    if d == 0:
        D_arr.fill(sqrt(2.0))
        np.fill_diagonal(D_arr, 0.0)
        return D_arr
    # one spare zero panel so blocks of two panels never run off the end
    npan = (n + 3) // 4 + 1
    padded = np.zeros((4 * npan, d), dtype=np.float64)
    padded[:n] = x
    P_arr = np.ascontiguousarray(padded.reshape(npan, 4, d).transpose(0, 2, 1))
    cdef double[:, :, ::1] P = P_arr
    cdef double[:, ::1] Dv = D_arr
    cdef Py_ssize_t ib, nblocks = (n + 3) // 4
    cdef int avx = erskit_use_avx() if simd else 0
    if workers < 1:
        workers = 1
    for ib in prange(nblocks, nogil=True, schedule="dynamic", num_threads=workers):
        _row_block(&x[0, 0], &P[0, 0, 0], &Dv[0, 0], 4 * ib, n, d, avx)
    _mirror_upper(Dv, n)
    return D_arr


cdef inline void _row_nn(double[:, ::1] D, Py_ssize_t i, const cnp.int64_t* act,
                         Py_ssize_t start, Py_ssize_t nact,
                         cnp.int64_t* nn, double* mind) noexcept nogil:
    # nearest active column j > i; act[start:nact] are exactly those columns
    cdef Py_ssize_t t, j, best_j = -1
    cdef double best = INFINITY, v
    for t in range(start, nact):
        j = act[t]
        v = D[i, j]
        if v < best:
            best = v
            best_j = j
    nn[i] = best_j
    mind[i] = best


def hac_merge(double[:, ::1] D, double threshold, int linkage):
    cdef Py_ssize_t n = D.shape[0]
    size_arr = np.ones(n, dtype=np.float64)
    nn_arr = np.full(n, -1, dtype=np.int64)
    mind_arr = np.full(n, np.inf)
    parent_arr = np.arange(n, dtype=np.int64)
    act_arr = np.arange(n, dtype=np.int64)
    merges_arr = np.empty((max(n - 1, 0), 3), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    cdef double[::1] size = size_arr
    cdef cnp.int64_t[::1] nn = nn_arr
    cdef double[::1] mind = mind_arr
    cdef cnp.int64_t[::1] parent = parent_arr
    cdef cnp.int64_t[::1] act = act_arr
    cdef double[:, ::1] merges = merges_arr
    cdef cnp.int64_t[::1] lab = labels
    cdef Py_ssize_t i, k, t, a, b, pa, nact = n, m = 0
    cdef double best, dak, dbk, new, na, nb, c

    if n == 0:
        return labels, merges_arr[:0].copy()

    with nogil:
        for i in range(n - 1):
            _row_nn(D, i, &act[0], i + 1, nact, &nn[0], &mind[0])

        while True:
            # act is sorted, so strict < keeps the smallest index on ties
            a = -1
            best = INFINITY
            for t in range(nact):
                i = act[t]
                if mind[i] < best:
                    best = mind[i]
                    a = i
            if a < 0 or not (best <= threshold):
                break
            b = nn[a]
            merges[m, 0] = a
            merges[m, 1] = b
            merges[m, 2] = best
            m += 1

            # drop b from the active list
            t = 0
            while act[t] != b:
                t += 1
            while t + 1 < nact:
                act[t] = act[t + 1]
                t += 1
            nact -= 1
            mind[b] = INFINITY
            nn[b] = -1
            parent[b] = a
            D[a, b] = INFINITY

            # Lance-Williams update of cluster a, fused with the
            # nearest-neighbour refresh of every row whose entries changed
            na = size[a]
            nb = size[b]
            pa = -1
            for t in range(nact):
                k = act[t]
                if k == a:
                    pa = t
                    continue
                dak = D[k, a] if k < a else D[a, k]
                dbk = D[k, b] if k < b else D[b, k]
                if linkage == SINGLE:
                    new = dak if dak < dbk else dbk
                elif linkage == COMPLETE:
                    new = dak if dak > dbk else dbk
                else:
                    new = (na * dak + nb * dbk) / (na + nb)
                if k < a:
                    D[k, a] = new
                else:
                    D[a, k] = new
                if k < b:
                    D[k, b] = INFINITY
                    if nn[k] == a or nn[k] == b:
                        _row_nn(D, k, &act[0], t + 1, nact, &nn[0], &mind[0])
                    elif k < a:
                        c = new
                        if c < mind[k] or (c == mind[k] and a < nn[k]):
                            mind[k] = c
                            nn[k] = a
            size[a] = na + nb
            _row_nn(D, a, &act[0], pa + 1, nact, &nn[0], &mind[0])

        # b is always merged into a smaller index a, so following parents
        # reaches the cluster's minimum index
        for i in range(n):
            k = i
            while parent[k] != k:
                k = parent[k]
            lab[i] = k
    return labels, merges_arr[:m].copy()
