"""Signed feature hashing and the hash kernel it induces."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError

log = logging.getLogger(__name__)

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def mix64(z) -> np.ndarray:
    """SplitMix64 output function, vectorised over uint64 arrays."""
    with np.errstate(over="ignore"):
        z = np.asarray(z, dtype=np.uint64) + _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _tables(seed1, seed2, f: int, m: int):
    """Bucket and sign tables for one or many seed pairs (broadcast on the
    leading axis)."""
    j = np.arange(f, dtype=np.uint64)
    s1 = np.asarray(seed1, dtype=np.uint64)[..., None]
    s2 = np.asarray(seed2, dtype=np.uint64)[..., None]
    buckets = (mix64(s1 ^ j) % np.uint64(m)).astype(np.int64)
    signs = np.where((mix64(s2 ^ j) & np.uint64(1)) == 0, 1.0, -1.0)
    return buckets, signs


@dataclass(frozen=True)
class HashSpec:
    """A pair of hash functions: bucket ``xi1(j) in [0, m)`` and sign ``xi2(j) = +-1``.

    Explicit ``bucket_table``/``sign_table`` override the seeded functions
    (used for hand-checkable cases).
    """

    m: int
    seed1: int = 0
    seed2: int = 0
    bucket_table: tuple | None = None
    sign_table: tuple | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("hash dimension m must be >= 1")

    def tables(self, f: int):
        if self.bucket_table is not None:
            if len(self.bucket_table) < f:
                raise ValueError(f"explicit hash table covers {len(self.bucket_table)} < {f} coordinates")
            b = np.asarray(self.bucket_table[:f], dtype=np.int64)
            s = np.asarray(self.sign_table[:f], dtype=np.float64)
            if np.any((b < 0) | (b >= self.m)):
                raise ValueError("bucket table entry outside [0, m)")
            return b, s
        return _tables(self.seed1 & _MASK64, self.seed2 & _MASK64, f, self.m)

    def derive(self, task: int, attempt: int = 0) -> "HashSpec":
        salt = (task + 1) ^ (attempt << 32)
        return HashSpec(self.m, self.seed1 ^ salt, self.seed2 ^ salt)


def phi(x, spec: HashSpec) -> np.ndarray:
    """Hash a vector (or each row of a matrix) into ``spec.m`` dimensions."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, x.shape[-1])
    b, s = spec.tables(flat.shape[1])
    out = np.zeros((flat.shape[0], spec.m))
    for j in range(flat.shape[1]):
        out[:, b[j]] += s[j] * flat[:, j]
    return out.reshape(x.shape[:-1] + (spec.m,))


def hash_kernel(x, x2, spec: HashSpec) -> float:
    x, x2 = np.asarray(x, dtype=np.float64), np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise ShapeError(f"hash_kernel: {x.shape} vs {x2.shape}")
    return float(phi(x, spec) @ phi(x2, spec))


def hash_kernel_samples(x, x2, m: int, seeds1, seeds2, seeds2_other=None) -> np.ndarray:
    """Hash-kernel values under many independently seeded specs at once.

    ``seeds2_other`` hashes ``x2`` with different sign seeds (a deliberately
    mismatched negative control)."""
    x, x2 = np.asarray(x, float), np.asarray(x2, float)
    f = len(x)
    b, s = _tables(seeds1, seeds2, f, m)
    rows = np.arange(len(b))[:, None]
    px = np.zeros((len(b), m))
    np.add.at(px, (rows, b), s * x)
    if seeds2_other is not None:
        _, s = _tables(seeds1, seeds2_other, f, m)
    px2 = np.zeros((len(b), m))
    np.add.at(px2, (rows, b), s * x2)
    return np.einsum("ij,ij->i", px, px2)


def cancelled_coordinates(spec: HashSpec, master: HashSpec, f: int) -> int:
    """Number of input coordinates that land in the same bucket as under
    ``master`` with the opposite sign, so they drop out of ``phi_master + phi_spec``."""
    b, s = spec.tables(f)
    gb, gs = master.tables(f)
    return int(np.sum((b == gb) & (s == -gs)))


def cancels(spec: HashSpec, master: HashSpec, f: int) -> bool:
    return cancelled_coordinates(spec, master, f) > 0


def task_specs(master: HashSpec, num_tasks: int, f: int, max_attempts: int = 16) -> list:
    """One spec per degree task, derived from ``master``.

    Among up to ``max_attempts`` reseeds, keep the first spec that cancels
    the fewest global coordinates, preferring tables not already used by the
    global map or an earlier task.
    """
    seen = {_key(master, f)}
    specs = []
    # with tiny m and f the table space itself may hold fewer than num_tasks+1 entries
    space = float(master.m) ** f * 2.0**f
    for t in range(num_tasks):
        best, best_score = None, None
        for attempt in range(max_attempts):
            spec = master.derive(t, attempt)
            score = (cancelled_coordinates(spec, master, f), _key(spec, f) in seen)
            if best_score is None or score < best_score:
                best, best_score = spec, score
            if score == (0, False):
                break
        if best_score[0]:
            # unavoidable once m is much smaller than f
            log.debug("hash task %d: %d coordinate(s) cancel against the global map", t, best_score[0])
        if best_score[1] and space >= num_tasks + 1:
            log.warning("hash task %d: table collision persists after %d reseeds", t, max_attempts)
        seen.add(_key(best, f))
        specs.append(best)
    return specs


def _key(spec: HashSpec, f: int):
    b, s = spec.tables(f)
    return b.tobytes() + s.tobytes()
