"""Backend selection for the aggregation kernels.

The compiled extension is preferred; ``DEMONET_BACKEND=python`` forces the
NumPy fallback. All entry points coerce their arguments to the contiguous
dtypes both backends expect.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available() -> list:
    return sorted(_BACKENDS)


def get(name: str = "auto"):
    if name == "auto":
        return _BACKENDS.get("cython", _pykernels)
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable (have {available()})")
    return _BACKENDS[name]


_active = get(os.environ.get("DEMONET_BACKEND", "auto"))


def active_name() -> str:
    return _active.NAME


def set_backend(name: str) -> None:
    global _active
    _active = get(name)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f(a):
    a = np.asarray(a)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float64)
    return np.ascontiguousarray(a)


def neighbor_sum(offsets, neighbors, h, backend=None):
    return (backend or _active).neighbor_sum(_i64(offsets), _i64(neighbors), _f(h))


def segment_sum(h, segments, num_segments, backend=None):
    return (backend or _active).segment_sum(_f(h), _i64(segments), int(num_segments))


def hash_project(x, row_task, xi1, xi2, m, backend=None):
    x = _f(x)
    return (backend or _active).hash_project(
        x, _i64(row_task), _i64(xi1), np.ascontiguousarray(xi2, dtype=x.dtype), int(m)
    )


def hash_project_t(g, row_task, xi1, xi2, backend=None):
    g = _f(g)
    return (backend or _active).hash_project_t(
        g, _i64(row_task), _i64(xi1), np.ascontiguousarray(xi2, dtype=g.dtype)
    )
