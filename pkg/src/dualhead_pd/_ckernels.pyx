# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the DWT and pair-mining kernels in _pykernels.

conv1d is absent on purpose: the BLAS-backed NumPy version is faster.
"""

import numpy as np
cimport cython
from cython cimport floating


def dwt_step(floating[:, ::1] frames, floating[::1] lo, floating[::1] hi):
    cdef Py_ssize_t m = frames.shape[0], n = frames.shape[1]
    cdef Py_ssize_t half = n // 2, taps = lo.shape[0]
    cdef Py_ssize_t r, kk, j, idx
    cdef floating a, d, v, ref
    dtype = np.float64 if floating is double else np.float32
    approx_arr = np.empty((m, half), dtype=dtype)
    detail_arr = np.empty((m, half), dtype=dtype)
    cdef floating[:, ::1] approx = approx_arr
    cdef floating[:, ::1] detail = detail_arr
    for r in range(m):
        for kk in range(half):
            a = 0
            d = 0
            ref = frames[r, 2 * kk]
            for j in range(taps):
                idx = (2 * kk + j) % n
                v = frames[r, idx]
                a = a + lo[j] * v
                d = d + hi[j] * (v - ref)
            approx[r, kk] = a
            detail[r, kk] = d
    return approx_arr, detail_arr


def hardest_pairs(double[:, ::1] emb, long[::1] labels):
    cdef Py_ssize_t n = emb.shape[0], dim = emb.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double d2, diff
    cdef double dp2 = -1.0, dn2 = 0.0
    cdef Py_ssize_t ip = -1, jp = -1, in_ = -1, jn = -1
    for i in range(n):
        for j in range(i + 1, n):
            d2 = 0
            for c in range(dim):
                diff = emb[i, c] - emb[j, c]
                d2 = d2 + diff * diff
            if labels[i] == labels[j]:
                if ip < 0 or d2 > dp2:
                    ip, jp, dp2 = i, j, d2
            else:
                if in_ < 0 or d2 < dn2:
                    in_, jn, dn2 = i, j, d2
    if ip < 0:
        dp2 = 0.0
    return ip, jp, dp2, in_, jn, dn2
