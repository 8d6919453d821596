"""Dense tensors with a reverse-mode tape.

Operations record themselves on the innermost active :class:`Tape` whenever
one of their inputs requires a gradient. Outside a tape the same functions
just compute values, which is what evaluation uses.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


class NondeterministicError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)


def param(value, name=None, dtype=None) -> Tensor:
    v = np.array(value, dtype=dtype) if dtype is not None else np.array(value)
    return Tensor(v, requires_grad=True, name=name)


def constant(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class _Record:
    out: Tensor
    inputs: tuple
    backward: object  # callable(grad_out) -> tuple of input grads (None = no grad)


_tapes: list = []


class Tape:
    """Ordered log of executed operations.

    Use as a context manager; :meth:`gradient` replays the log in reverse.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self):
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def vjp(self, output: Tensor, params, cotangent) -> list:
        """Vector-Jacobian product of ``output`` w.r.t. ``params``.

        Parameters the output does not depend on get exact zeros.
        """
        grads = {id(output): np.asarray(cotangent, dtype=output.dtype) * np.ones(output.shape, output.dtype)}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            for t, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
            # parameters are leaves; keep their grads around
        out = []
        for p in params:
            g = grads.get(id(p))
            out.append(np.zeros_like(p.value) if g is None else np.asarray(g, dtype=p.dtype).reshape(p.shape))
        return out

    def gradient(self, loss: Tensor, params) -> list:
        return self.vjp(loss, params, 1.0)


def _record(out_value, inputs, backward) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_value, requires_grad=needs and bool(_tapes))
    if out.requires_grad:
        _tapes[-1].records.append(_Record(out, tuple(inputs), backward))
    return out


@contextlib.contextmanager
def no_tape():
    saved = _tapes[:]
    _tapes.clear()
    try:
        yield
    finally:
        _tapes.extend(saved)


# ---------------------------------------------------------------------------
# operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    av, bv = a.value, b.value
    return _record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return _record(a.value + b.value, (a, b), lambda g: (g, g))


def scale(a: Tensor, c: float) -> Tensor:
    a = constant(a)
    return _record(a.value * c, (a,), lambda g: (g * c,))


def mul_const(a: Tensor, mask) -> Tensor:
    """Elementwise product with a constant array (dropout masks, row scalings)."""
    a = constant(a)
    mask = np.asarray(mask, dtype=a.dtype)
    return _record(a.value * mask, (a,), lambda g: (g * mask,))


def relu(x: Tensor) -> Tensor:
    x = constant(x)
    pos = x.value > 0
    return _record(np.where(pos, x.value, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * pos,))


def concat(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat: {a.shape} with {b.shape}")
    p = a.shape[1]
    return _record(np.concatenate([a.value, b.value], axis=1), (a, b), lambda g: (g[:, :p], g[:, p:]))


def reshape(a: Tensor, shape) -> Tensor:
    a = constant(a)
    old = a.shape
    return _record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def neighbor_sum(graph, h: Tensor) -> Tensor:
    """Row ``v`` = sum of ``h[u]`` over neighbors ``u`` of ``v``.

    Symmetric adjacency makes the operator its own adjoint, so the backward
    pass reuses it."""
    h = constant(h)
    if h.value.ndim != 2 or h.shape[0] != graph.n:
        raise ShapeError(f"neighbor_sum: graph has {graph.n} nodes, features {h.shape}")
    off, nb = graph.csr_offsets, graph.csr_neighbors
    return _record(
        kernels.neighbor_sum(off, nb, h.value), (h,), lambda g: (kernels.neighbor_sum(off, nb, g),)
    )


def segment_sum(h: Tensor, segments, num_segments: int) -> Tensor:
    """Sum rows into ``num_segments`` buckets; rows with a negative id are dropped."""
    h = constant(h)
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != (h.shape[0],):
        raise ShapeError("segment_sum: one segment id per row required")
    keep = (seg >= 0)[:, None]
    safe = np.maximum(seg, 0)

    def back(g):
        return (np.where(keep, g[safe], 0).astype(g.dtype, copy=False),)

    return _record(kernels.segment_sum(h.value, seg, num_segments), (h,), back)


def grouped_matmul(x: Tensor, weights, groups) -> Tensor:
    """Row ``v`` of the result is ``x[v] @ weights[groups[v]]``; rows whose
    group is negative produce zeros."""
    x = constant(x)
    groups = np.asarray(groups, dtype=np.int64)
    if not weights:
        raise ShapeError("grouped_matmul needs at least one weight matrix")
    f_out = weights[0].shape[1]
    for w in weights:
        if w.shape != (x.shape[1], f_out):
            raise ShapeError(f"grouped_matmul: weight {w.shape} vs input {x.shape}")
    rows = [np.flatnonzero(groups == t) for t in range(len(weights))]
    out = np.zeros((x.shape[0], f_out), dtype=x.dtype)
    xv = x.value
    for r, w in zip(rows, weights):
        if len(r):
            out[r] = xv[r] @ w.value

    def back(g):
        gx = np.zeros_like(xv)
        gws = []
        for r, w in zip(rows, weights):
            if len(r):
                gx[r] = g[r] @ w.value.T
                gws.append(xv[r].T @ g[r])
            else:
                gws.append(None)
        return (gx, *gws)

    return _record(out, (x, *weights), back)


def hash_project(x: Tensor, row_task, xi1, xi2, m: int) -> Tensor:
    """Apply a per-row signed hash map (``xi1``/``xi2`` tables indexed by task)."""
    x = constant(x)
    row_task = np.asarray(row_task, dtype=np.int64)
    if row_task.shape != (x.shape[0],) or xi1.shape[1] != x.shape[1]:
        raise ShapeError(f"hash_project: tables {xi1.shape} vs input {x.shape}")
    return _record(
        kernels.hash_project(x.value, row_task, xi1, xi2, m),
        (x,),
        lambda g: (kernels.hash_project_t(g, row_task, xi1, xi2),),
    )


def sum_squares(a: Tensor) -> Tensor:
    a = constant(a)
    v = a.value
    return _record(np.asarray(np.sum(v * v), dtype=v.dtype), (a,), lambda g: (2.0 * g * v,))


def add_scalars(*terms) -> Tensor:
    terms = [constant(t) for t in terms]
    total = sum(np.asarray(t.value) for t in terms)
    return _record(np.asarray(total), tuple(terms), lambda g: tuple(g for _ in terms))


def softmax_xent_loss(logits: Tensor, labels, mask) -> Tensor:
    """Mean cross-entropy over the masked rows (softmax applied here)."""
    logits = constant(logits)
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValueError("softmax_xent_loss: empty mask")
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.value[mask]
    c = z.shape[1]
    y = labels[mask]
    if np.any((y < 0) | (y >= c)):
        raise ValueError("softmax_xent_loss: label outside [0, C) on a masked row")
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    k = len(mask)
    loss = -logp[np.arange(k), y].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(k), y] -= 1.0
        full = np.zeros_like(logits.value)
        np.add.at(full, mask, p * (g / k))
        return (full,)

    return _record(np.asarray(loss, dtype=logits.dtype), (logits,), back)


# ---------------------------------------------------------------------------
# verification


def _scalar(t: Tensor) -> float:
    v = np.asarray(t.value)
    if v.size != 1:
        raise ShapeError(f"expected a scalar loss, got shape {v.shape}")
    return float(v.reshape(()))


def finite_diff_check(f, params, eps: float = 1e-5, max_coords: int = 400, seed: int = 0) -> float:
    """Compare tape gradients with central differences.

    ``f`` is a zero-argument closure that builds a scalar loss from the current
    ``params`` values. Returns the max over sampled coordinates of
    ``|g_fd - g_tape| / max(1, |g_fd|)``.
    """
    with no_tape():
        a = _scalar(f())
        b = _scalar(f())
    if a != b:
        raise NondeterministicError(
            "loss closure is not deterministic; freeze dropout masks before gradient checking"
        )
    with Tape() as tape:
        loss = f()
    tape_grads = tape.gradient(loss, params)
    rng = np.random.default_rng(seed)
    coords = [(pi, j) for pi, p in enumerate(params) for j in range(p.value.size)]
    if len(coords) > max_coords:
        coords = [coords[i] for i in rng.choice(len(coords), max_coords, replace=False)]
    worst = 0.0
    with no_tape():
        for pi, j in coords:
            flat = params[pi].value.reshape(-1)
            old = flat[j]
            flat[j] = old + eps
            up = _scalar(f())
            flat[j] = old - eps
            down = _scalar(f())
            flat[j] = old
            g_fd = (up - down) / (2 * eps)
            g_tp = float(tape_grads[pi].reshape(-1)[j])
            worst = max(worst, abs(g_fd - g_tp) / max(1.0, abs(g_fd)))
    return worst
