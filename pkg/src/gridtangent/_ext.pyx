# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid kernels; see ``_pyfallback`` for the reference versions."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def gather(const cnp.int64_t[:, ::1] idx, const double[:, ::1] wts,
           const double[:, ::1] feats):
    cdef Py_ssize_t n = idx.shape[0], k = idx.shape[1], d = feats.shape[1]
    cdef Py_ssize_t i, c, ch
    cdef cnp.int64_t r
    cdef double w
    out = np.zeros((n, d))
    cdef double[:, ::1] o = out
    for c in range(k):
        for i in range(n):
            r = idx[i, c]
            w = wts[i, c]
            for ch in range(d):
                o[i, ch] += w * feats[r, ch]
    return out


def scatter_add(const cnp.int64_t[:, ::1] idx, const double[:, ::1] wts,
                const double[:, ::1] vals, Py_ssize_t m):
    cdef Py_ssize_t n = idx.shape[0], k = idx.shape[1], d = vals.shape[1]
    cdef Py_ssize_t i, c, ch
    cdef cnp.int64_t r
    out = np.zeros((m, d))
    cdef double[:, ::1] o = out
    for ch in range(d):
        for i in range(n):
            for c in range(k):
                r = idx[i, c]
                o[r, ch] += wts[i, c] * vals[i, ch]
    return out


def gtk_pairwise(const cnp.int64_t[:, ::1] idx_a, const double[:, ::1] w_a,
                 const cnp.int64_t[:, ::1] idx_b, const double[:, ::1] w_b):
    cdef Py_ssize_t na = idx_a.shape[0], ka = idx_a.shape[1]
    cdef Py_ssize_t nb = idx_b.shape[0], kb = idx_b.shape[1]
    cdef Py_ssize_t i, j, a, b
    cdef double acc
    out = np.empty((na, nb))
    cdef double[:, ::1] o = out
    for i in range(na):
        for j in range(nb):
            acc = 0.0
            for a in range(ka):
                for b in range(kb):
                    if idx_a[i, a] == idx_b[j, b]:
                        acc += w_a[i, a] * w_b[j, b]
            o[i, j] = acc
    return out
