"""NumPy implementations of the aggregation kernels.

Always available; used when the compiled extension is missing or when
``DEMONET_BACKEND=python`` is set.
"""

import numpy as np

NAME = "python"


def neighbor_sum(offsets, neighbors, h):
    """Row ``v`` of the result is the sum of ``h[u]`` over the CSR row of ``v``,
    accumulated left to right in storage order."""
    n = len(offsets) - 1
    out = np.zeros((n, h.shape[1]), dtype=h.dtype)
    if len(neighbors) == 0:
        return out
    deg = np.diff(offsets)
    nz = np.flatnonzero(deg)
    out[nz] = np.add.reduceat(h[neighbors], offsets[nz], axis=0)
    return out


def segment_sum(h, segments, num_segments):
    out = np.zeros((num_segments, h.shape[1]), dtype=h.dtype)
    keep = segments >= 0
    np.add.at(out, segments[keep], h[keep])
    return out


def hash_project(x, row_task, xi1, xi2, m):
    n, f = x.shape
    out = np.zeros((n, m), dtype=x.dtype)
    rows = np.flatnonzero(row_task >= 0)
    if len(rows) == 0 or f == 0:
        return out
    t = row_task[rows]
    flat = (rows[:, None] * m + xi1[t]).ravel()
    vals = (x[rows] * xi2[t]).ravel()
    out.ravel()[:] = np.bincount(flat, weights=vals, minlength=n * m).astype(x.dtype, copy=False)
    return out


def hash_project_t(g, row_task, xi1, xi2):
    n = g.shape[0]
    f = xi1.shape[1]
    out = np.zeros((n, f), dtype=g.dtype)
    rows = np.flatnonzero(row_task >= 0)
    if len(rows) == 0:
        return out
    t = row_task[rows]
    out[rows] = np.take_along_axis(g[rows], xi1[t], axis=1) * xi2[t]
    return out
