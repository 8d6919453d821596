import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demonet.autodiff import ShapeError
from demonet.hashing import HashSpec, cancelled_coordinates, cancels, hash_kernel, hash_kernel_samples, mix64, phi, task_specs


def identity_spec(f, m=None):
    m = f if m is None else m
    return HashSpec(m, bucket_table=tuple(range(f)), sign_table=(1,) * f)


def test_phi_zero():
    assert np.all(phi(np.zeros(5), HashSpec(3, 1, 2)) == 0)


def test_phi_identity_padding():
    x = np.array([1.0, -2.0, 3.0])
    out = phi(x, identity_spec(3, m=5))
    assert out.tolist() == [1.0, -2.0, 3.0, 0.0, 0.0]


def test_phi_hand_tables():
    # 1-based tables [1,2,1,2] written 0-based
    spec = HashSpec(2, bucket_table=(0, 1, 0, 1), sign_table=(1, -1, -1, 1))
    assert phi([1.0, 2.0, 3.0, 4.0], spec).tolist() == [-2.0, 2.0]


def test_phi_bad_table():
    with pytest.raises(ValueError):
        phi([1.0, 2.0], HashSpec(2, bucket_table=(0, 2), sign_table=(1, 1)))


def test_hash_kernel_zero_and_lossless():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(6), rng.standard_normal(6)
    assert hash_kernel(x, np.zeros(6), HashSpec(4, 3, 4)) == 0
    assert hash_kernel(x, y, identity_spec(6)) == pytest.approx(x @ y, abs=1e-12)


def test_hash_kernel_shape_error():
    with pytest.raises(ShapeError):
        hash_kernel(np.ones(3), np.ones(4), HashSpec(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(1, 8), st.integers(0, 2**63), st.integers(0, 2**63),
       st.floats(-3, 3), st.floats(-3, 3))
def test_phi_linear(f, m, s1, s2, a, b):
    rng = np.random.default_rng(s1 % 1000)
    x, y = rng.standard_normal(f), rng.standard_normal(f)
    spec = HashSpec(m, s1, s2)
    assert np.allclose(phi(a * x + b * y, spec), a * phi(x, spec) + b * phi(y, spec), atol=1e-12)


def test_phi_deterministic():
    x = np.random.default_rng(1).standard_normal(30)
    assert np.array_equal(phi(x, HashSpec(7, 11, 12)), phi(x, HashSpec(7, 11, 12)))


def test_tables_ranges():
    b, s = HashSpec(5, 123, 456).tables(1000)
    assert b.min() >= 0 and b.max() < 5
    assert set(np.unique(s)) == {-1.0, 1.0}
    # roughly balanced buckets and signs
    assert np.all(np.bincount(b, minlength=5) > 150)
    assert abs(s.mean()) < 0.1


def test_mix64_known_value():
    # first output of the reference SplitMix64 generator seeded with 0
    assert int(mix64(0)) == 0xE220A8397B1DCDAF


def test_unbiased_monte_carlo():
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal(12), rng.standard_normal(12)
    s1 = rng.integers(0, 2**63, 10_000, dtype=np.uint64)
    s2 = rng.integers(0, 2**63, 10_000, dtype=np.uint64)
    vals = hash_kernel_samples(x, y, 4, s1, s2)
    assert abs(vals.mean() - x @ y) < 3 * vals.std(ddof=1) / 100


def test_samples_match_single_spec():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(9), rng.standard_normal(9)
    vals = hash_kernel_samples(x, y, 3, np.array([5, 6], np.uint64), np.array([7, 8], np.uint64))
    assert vals[0] == pytest.approx(hash_kernel(x, y, HashSpec(3, 5, 7)))
    assert vals[1] == pytest.approx(hash_kernel(x, y, HashSpec(3, 6, 8)))


def test_mismatched_signs_biased():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(10)
    s = rng.integers(0, 2**63, (3, 10_000), dtype=np.uint64)
    vals = hash_kernel_samples(x, x, 4, s[0], s[1], s[2])
    assert abs(vals.mean() - x @ x) > 3 * vals.std(ddof=1) / 100


def test_task_specs_distinct():
    master = HashSpec(16, 1, 2)
    specs = task_specs(master, 20, 16)
    keys = {s.tables(16)[0].tobytes() + s.tables(16)[1].tobytes() for s in specs}
    assert len(keys) == 20
    assert master.tables(16)[0].tobytes() not in {s.tables(16)[0].tobytes() for s in specs}


def test_task_specs_never_cancel():
    for seed in range(30):
        master = HashSpec(1, seed, seed + 1)
        for spec in task_specs(master, 3, 1):
            assert not cancels(spec, master, 1)


def test_task_specs_deterministic():
    a = task_specs(HashSpec(4, 9, 10), 5, 6)
    b = task_specs(HashSpec(4, 9, 10), 5, 6)
    assert a == b


def test_task_specs_minimise_cancellation():
    # 32 coordinates into one bucket: some cancellation is unavoidable
    master = HashSpec(1, 5, 6)
    for t, spec in enumerate(task_specs(master, 3, 32)):
        best = min(cancelled_coordinates(master.derive(t, a), master, 32) for a in range(16))
        assert cancelled_coordinates(spec, master, 32) == best
