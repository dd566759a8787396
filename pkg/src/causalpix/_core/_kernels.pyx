# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pixel kernels: cell/template matching and frame differencing.

Mirrors ``_fallback.py``; accumulation is float64 throughout so results
agree with the NumPy path on 8-bit pixel data.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def cell_match_ssd(cells, templates):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(cells, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] t = np.ascontiguousarray(templates, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], m = t.shape[0], d = c.shape[1]
    if t.shape[1] != d:
        raise ValueError("cells and templates must share the feature dimension")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = c[i, k] - t[j, k]
                acc += diff * diff
            out[i, j] = acc
    return out


def frame_mean_abs_diff(frames):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] f = np.ascontiguousarray(frames, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0], p = f.shape[1]
    if n < 2:
        return np.zeros(0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n - 1, dtype=np.float64)
    cdef Py_ssize_t i, k
    cdef double acc, diff
    for i in range(n - 1):
        acc = 0.0
        for k in range(p):
            diff = f[i + 1, k] - f[i, k]
            acc += diff if diff >= 0 else -diff
        out[i] = acc / p
    return out
