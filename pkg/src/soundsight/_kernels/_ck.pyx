# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: RVQ nearest-entry scan, exact GELU, last-axis softmax.

Contracts mirror pyfallback.py. Single-threaded on purpose: results must be
reproducible and independent of worker count.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erf, exp, sqrt

cnp.import_array()

cdef double INV_SQRT2 = 1.0 / sqrt(2.0)
cdef double INV_SQRT2PI = 1.0 / sqrt(2.0 * 3.14159265358979323846)


def nearest_codebook(double[:, ::1] x, double[:, ::1] cb):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], v = cb.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.empty(n, dtype=np.float64)
    cdef long long[::1] idx_v = idx
    cdef double[::1] dist_v = dist
    cdef Py_ssize_t i, j, k, best
    cdef double s, diff, bestd
    with nogil:
        for i in range(n):
            best = 0
            bestd = 0.0
            for j in range(v):
                s = 0.0
                for k in range(d):
                    diff = x[i, k] - cb[j, k]
                    s += diff * diff
                if j == 0 or s < bestd:  # strict < keeps the lowest index on ties
                    bestd = s
                    best = j
            idx_v[i] = best
            dist_v[i] = bestd
    return idx, dist


def gelu_fwd(double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.empty(n, dtype=np.float64)
    cdef double[::1] y_v = y
    with nogil:
        for i in range(n):
            y_v[i] = 0.5 * x[i] * (1.0 + erf(x[i] * INV_SQRT2))
    return y


def gelu_bwd(double[::1] x, double[::1] gy):
    cdef Py_ssize_t n = x.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gx = np.empty(n, dtype=np.float64)
    cdef double[::1] gx_v = gx
    cdef double phi
    with nogil:
        for i in range(n):
            phi = exp(-0.5 * x[i] * x[i]) * INV_SQRT2PI
            gx_v[i] = gy[i] * (0.5 * (1.0 + erf(x[i] * INV_SQRT2)) + x[i] * phi)
    return gx


def softmax_last(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] y_v = y
    cdef double mx, s
    with nogil:
        for i in range(n):
            mx = x[i, 0]
            for j in range(1, m):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(m):
                y_v[i, j] = exp(x[i, j] - mx)
                s += y_v[i, j]
            for j in range(m):
                y_v[i, j] /= s
    return y
