# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled aggregation kernels (same contracts as ``_pykernels``)."""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()

NAME = "cython"

ctypedef cnp.int64_t i64


def neighbor_sum(const i64[::1] offsets, const i64[::1] neighbors, const floating[:, ::1] h):
    cdef Py_ssize_t n = offsets.shape[0] - 1, f = h.shape[1], v, p, j, u
    dtype = np.float64 if floating is double else np.float32
    out_arr = np.zeros((n, f), dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    with nogil:
        for v in range(n):
            for p in range(offsets[v], offsets[v + 1]):
                u = neighbors[p]
                for j in range(f):
                    out[v, j] += h[u, j]
    return out_arr


def segment_sum(const floating[:, ::1] h, const i64[::1] segments, Py_ssize_t num_segments):
    cdef Py_ssize_t n = h.shape[0], f = h.shape[1], v, j, s
    dtype = np.float64 if floating is double else np.float32
    out_arr = np.zeros((num_segments, f), dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    with nogil:
        for v in range(n):
            s = segments[v]
            if s < 0:
                continue
            for j in range(f):
                out[s, j] += h[v, j]
    return out_arr


def hash_project(const floating[:, ::1] x, const i64[::1] row_task, const i64[:, ::1] xi1,
                 const floating[:, ::1] xi2, Py_ssize_t m):
    cdef Py_ssize_t n = x.shape[0], f = x.shape[1], v, j, t
    dtype = np.float64 if floating is double else np.float32
    out_arr = np.zeros((n, m), dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    with nogil:
        for v in range(n):
            t = row_task[v]
            if t < 0:
                continue
            for j in range(f):
                out[v, xi1[t, j]] += xi2[t, j] * x[v, j]
    return out_arr


def hash_project_t(const floating[:, ::1] g, const i64[::1] row_task, const i64[:, ::1] xi1,
                   const floating[:, ::1] xi2):
    cdef Py_ssize_t n = g.shape[0], f = xi1.shape[1], v, j, t
    dtype = np.float64 if floating is double else np.float32
    out_arr = np.zeros((n, f), dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    with nogil:
        for v in range(n):
            t = row_task[v]
            if t < 0:
                continue
            for j in range(f):
                out[v, j] = xi2[t, j] * g[v, xi1[t, j]]
    return out_arr
