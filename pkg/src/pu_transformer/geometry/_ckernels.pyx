# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled O(N^2) geometry kernels.

Every routine mirrors a function in ``_kernels_py`` and must return identical
results: distances are accumulated as ``dx*dx + dy*dy + dz*dz`` in double
precision and ties always resolve to the lower index.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef fused real_t:
    float
    double


cdef inline double _sqdist(const double[:, ::1] a, Py_ssize_t i,
                           const double[:, ::1] b, Py_ssize_t j) noexcept nogil:
    cdef double dx = a[i, 0] - b[j, 0]
    cdef double dy = a[i, 1] - b[j, 1]
    cdef double dz = a[i, 2] - b[j, 2]
    return dx * dx + dy * dy + dz * dz


def knn_query(const double[:, ::1] queries, const double[:, ::1] points,
              Py_ssize_t k, bint self_first=False):
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t n = points.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((nq, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = out
    cdef double[::1] best = np.empty(k, dtype=np.float64)
    cdef cnp.int64_t[::1] best_idx = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t i, j, p, filled
    cdef double d
    with nogil:
        for i in range(nq):
            filled = 0
            for j in range(n):
                if self_first and j == i:
                    d = -1.0
                else:
                    d = _sqdist(queries, i, points, j)
                if filled == k and d >= best[k - 1]:
                    continue
                # insertion keeps (distance, index) order; equal distances stay behind earlier indices
                if filled < k:
                    p = filled
                    filled += 1
                else:
                    p = k - 1
                while p > 0 and best[p - 1] > d:
                    best[p] = best[p - 1]
                    best_idx[p] = best_idx[p - 1]
                    p -= 1
                best[p] = d
                best_idx[p] = j
            for p in range(k):
                idx[i, p] = best_idx[p]
    return out


def fps(const double[:, ::1] points, Py_ssize_t m, Py_ssize_t start):
    cdef Py_ssize_t n = points.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] sel = out
    cdef double[::1] mind = np.full(n, INFINITY, dtype=np.float64)
    cdef Py_ssize_t it, j, cur = start, nxt
    cdef double d, bestd
    with nogil:
        for it in range(m):
            sel[it] = cur
            mind[cur] = -1.0
            bestd = -INFINITY
            nxt = 0
            for j in range(n):
                if mind[j] >= 0.0:
                    d = _sqdist(points, cur, points, j)
                    if d < mind[j]:
                        mind[j] = d
                if mind[j] > bestd:
                    bestd = mind[j]
                    nxt = j
            cur = nxt
    return out


def nearest(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t na = a.shape[0]
    cdef Py_ssize_t nb = b.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.empty(na, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] arg = np.empty(na, dtype=np.int64)
    cdef double[::1] dv = dist
    cdef cnp.int64_t[::1] av = arg
    cdef Py_ssize_t i, j, bj
    cdef double d, bd
    with nogil:
        for i in range(na):
            bd = INFINITY
            bj = 0
            for j in range(nb):
                d = _sqdist(a, i, b, j)
                if d < bd:
                    bd = d
                    bj = j
            dv[i] = bd
            av[i] = bj
    return dist, arg


def scatter_add_rows(real_t[:, ::1] out, const cnp.int64_t[::1] idx,
                     const real_t[:, ::1] src):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t c = src.shape[1]
    cdef Py_ssize_t i, j, row
    with nogil:
        for i in range(n):
            row = idx[i]
            for j in range(c):
                out[row, j] += src[i, j]
