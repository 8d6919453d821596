"""The compiled and NumPy kernel backends agree up to summation order."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demonet import kernels
from demonet.synth import gnm

BACKENDS = kernels.available()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")


def test_python_backend_always_present():
    assert "python" in BACKENDS
    assert kernels.get("python").NAME == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get("fortran")


def test_set_backend_roundtrip():
    before = kernels.active_name()
    kernels.set_backend("python")
    assert kernels.active_name() == "python"
    kernels.set_backend(before)


@pytest.mark.parametrize("name", BACKENDS)
def test_neighbor_sum_path(name):
    g = gnm(3, 0, seed=0)
    out = kernels.neighbor_sum([0, 1, 3, 4], [1, 0, 2, 1], np.eye(3), backend=kernels.get(name))
    assert out.tolist() == [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
    assert g.n == 3


@pytest.mark.parametrize("name", BACKENDS)
def test_segment_sum_skips_negative(name):
    h = np.arange(8.0).reshape(4, 2)
    out = kernels.segment_sum(h, [1, -1, 1, 0], 3, backend=kernels.get(name))
    assert out.tolist() == [[6, 7], [4, 6], [0, 0]]


@pytest.mark.parametrize("name", BACKENDS)
def test_hash_project_hand(name):
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    out = kernels.hash_project(x, [0], [[0, 1, 0, 1]], [[1, -1, -1, 1]], 2, backend=kernels.get(name))
    assert out.tolist() == [[-2.0, 2.0]]


@needs_both
@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 80), st.integers(1, 5), st.integers(0, 2**31),
       st.sampled_from([np.float32, np.float64]))
def test_backends_agree(n, m, f, seed, dtype):
    m = min(m, n * (n - 1) // 2)
    g = gnm(n, m, seed=seed)
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((n, f)).astype(dtype)
    c, py = kernels.get("cython"), kernels.get("python")
    a = kernels.neighbor_sum(g.csr_offsets, g.csr_neighbors, h, backend=c)
    b = kernels.neighbor_sum(g.csr_offsets, g.csr_neighbors, h, backend=py)
    tol = 1e-5 if dtype == np.float32 else 1e-12
    assert a.dtype == b.dtype == dtype
    assert np.allclose(a, b, rtol=tol, atol=tol)

    seg = rng.integers(-1, 4, n)
    sa, sb = kernels.segment_sum(h, seg, 4, backend=c), kernels.segment_sum(h, seg, 4, backend=py)
    assert np.allclose(sa, sb, rtol=tol, atol=tol)

    T, mdim = 3, int(rng.integers(1, 6))
    xi1 = rng.integers(0, mdim, (T, f))
    xi2 = rng.choice([-1.0, 1.0], (T, f))
    tasks = rng.integers(0, T, n)
    pa = kernels.hash_project(h, tasks, xi1, xi2, mdim, backend=c)
    pb = kernels.hash_project(h, tasks, xi1, xi2, mdim, backend=py)
    assert np.allclose(pa, pb, rtol=tol, atol=tol)
    gr = rng.standard_normal((n, mdim)).astype(dtype)
    ta = kernels.hash_project_t(gr, tasks, xi1, xi2, backend=c)
    tb = kernels.hash_project_t(gr, tasks, xi1, xi2, backend=py)
    assert np.allclose(ta, tb, rtol=tol, atol=tol)


@needs_both
def test_hash_project_adjoint():
    rng = np.random.default_rng(0)
    x, gr = rng.standard_normal((7, 5)), rng.standard_normal((7, 3))
    xi1, xi2 = rng.integers(0, 3, (2, 5)), rng.choice([-1.0, 1.0], (2, 5))
    tasks = rng.integers(0, 2, 7)
    for name in BACKENDS:
        be = kernels.get(name)
        lhs = np.sum(kernels.hash_project(x, tasks, xi1, xi2, 3, backend=be) * gr)
        rhs = np.sum(x * kernels.hash_project_t(gr, tasks, xi1, xi2, backend=be))
        assert lhs == pytest.approx(rhs)
