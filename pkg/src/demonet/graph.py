"""Graph storage, degree indexing, feature construction and data splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

UNLABELED = -1


class GraphError(ValueError):
    """Base class for malformed graph input."""


class ParseError(GraphError):
    pass


class FormatError(GraphError):
    pass


class ValidationError(GraphError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph in CSR form.

    Each neighbor row is sorted into ascending node-id order on construction,
    so any traversal of ``csr_neighbors`` visits neighbors in a fixed order
    regardless of the order edges or rows were supplied in.
    """

    n: int
    csr_offsets: np.ndarray
    csr_neighbors: np.ndarray
    attributes: np.ndarray | None = None
    node_labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        offsets = np.asarray(self.csr_offsets, dtype=np.int64)
        neighbors = np.asarray(self.csr_neighbors, dtype=np.int64)
        if offsets.shape != (self.n + 1,) or offsets[0] != 0 or offsets[-1] != len(neighbors):
            raise ValidationError("csr_offsets inconsistent with node count / neighbor array")
        if np.any(np.diff(offsets) < 0):
            raise ValidationError("csr_offsets must be monotone")
        if len(neighbors) and (neighbors.min() < 0 or neighbors.max() >= self.n):
            raise ValidationError("neighbor id out of range")
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(offsets))
        if np.any(np.diff(rows * max(self.n, 1) + neighbors) < 0):
            neighbors = neighbors[np.lexsort((neighbors, rows))]
        object.__setattr__(self, "csr_offsets", _frozen(offsets))
        object.__setattr__(self, "csr_neighbors", _frozen(neighbors))
        object.__setattr__(self, "degrees", _frozen(np.diff(offsets)))
        if self.attributes is not None:
            x = np.asarray(self.attributes, dtype=np.float64)
            if x.ndim != 2 or x.shape[0] != self.n:
                raise ValidationError(f"attributes must be {self.n} x D, got {x.shape}")
            object.__setattr__(self, "attributes", _frozen(x))
        if self.node_labels is not None:
            y = np.asarray(self.node_labels, dtype=np.int64)
            if y.shape != (self.n,):
                raise ValidationError("node_labels must have one entry per node")
            object.__setattr__(self, "node_labels", _frozen(y))

    # -- construction -------------------------------------------------
    @classmethod
    def from_edges(cls, n: int, edges, attributes=None, node_labels=None, meta=None) -> "Graph":
        """Build from an iterable/array of (u, v) pairs.

        Reversed and repeated pairs collapse to one undirected edge; self-loops
        are dropped (the count is kept in ``meta['self_loops_dropped']``).
        """
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        e = e.reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise ValidationError(f"edge endpoint out of range for n={n}")
        loops = e[:, 0] == e[:, 1]
        e = e[~loops]
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        und = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(e) else np.empty((0, 2), np.int64)
        meta = dict(meta or {})
        meta.setdefault("self_loops_dropped", int(loops.sum()))
        meta.setdefault("duplicates_dropped", int(len(e) - len(und)))
        src = np.concatenate([und[:, 0], und[:, 1]])
        dst = np.concatenate([und[:, 1], und[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
        return cls(n, offsets, dst, attributes, node_labels, meta)

    @classmethod
    def from_csr(cls, offsets, neighbors, **kw) -> "Graph":
        """Build from possibly unsorted, possibly asymmetric CSR arrays.

        The result is canonical: symmetrised, deduplicated and row-sorted.
        """
        offsets = np.asarray(offsets, dtype=np.int64)
        n = len(offsets) - 1
        src = np.repeat(np.arange(n), np.diff(offsets))
        return cls.from_edges(n, np.stack([src, np.asarray(neighbors, np.int64)], axis=1), **kw)

    def replace(self, **changes) -> "Graph":
        kw = dict(
            n=self.n,
            csr_offsets=self.csr_offsets,
            csr_neighbors=self.csr_neighbors,
            attributes=self.attributes,
            node_labels=self.node_labels,
            meta=dict(self.meta),
        )
        kw.update(changes)
        return Graph(**kw)

    # -- queries --------------------------------------------------------
    @property
    def num_edges(self) -> int:
        return len(self.csr_neighbors) // 2

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_neighbors[self.csr_offsets[v] : self.csr_offsets[v + 1]]

    def edges(self) -> np.ndarray:
        """Undirected edge array with u < v, sorted."""
        src = np.repeat(np.arange(self.n), self.degrees)
        keep = src < self.csr_neighbors
        return np.stack([src[keep], self.csr_neighbors[keep]], axis=1)

    @property
    def attr_dim(self) -> int:
        return 0 if self.attributes is None else self.attributes.shape[1]

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Relabel node ``v`` as ``perm[v]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(self.n)
        x = None if self.attributes is None else self.attributes[inv]
        y = None if self.node_labels is None else self.node_labels[inv]
        return Graph.from_edges(self.n, perm[self.edges()], attributes=x, node_labels=y)

    def check_symmetric(self) -> bool:
        src = np.repeat(np.arange(self.n), self.degrees)
        dst = self.csr_neighbors
        fwd = np.lexsort((dst, src))
        bwd = np.lexsort((src, dst))
        return bool(
            np.array_equal(src[fwd], dst[bwd])
            and np.array_equal(dst[fwd], src[bwd])
            and not np.any(src == dst)
        )


@dataclass(frozen=True, eq=False)
class GraphSet:
    graphs: list
    graph_labels: np.ndarray | None = None
    attr_dim: int = 0

    def __post_init__(self):
        dims = {g.attr_dim for g in self.graphs}
        if len(dims) > 1:
            raise ValidationError(f"graphs disagree on attribute dimension: {sorted(dims)}")
        if self.graphs and not self.attr_dim:
            object.__setattr__(self, "attr_dim", dims.pop())
        if self.graph_labels is not None:
            y = np.asarray(self.graph_labels, dtype=np.int64)
            if y.shape != (len(self.graphs),):
                raise ValidationError("graph_labels must cover every graph")
            object.__setattr__(self, "graph_labels", _frozen(y))

    def __len__(self) -> int:
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    def subset(self, idx) -> "GraphSet":
        idx = list(idx)
        y = None if self.graph_labels is None else self.graph_labels[idx]
        return GraphSet([self.graphs[i] for i in idx], y, self.attr_dim)


# ---------------------------------------------------------------------------
# degree index


def _log2_bucket(d: int) -> int:
    return 0 if d <= 0 else 1 << (int(d).bit_length() - 1)


@dataclass(frozen=True)
class DegreeIndex:
    """Maps degree values to contiguous task ids.

    With ``bucketing`` set, raw degrees first collapse to the power of two
    ``2**floor(log2(d))`` (degree 0 keeps its own bucket).
    """

    degree_values: tuple
    bucketing: bool = False

    @property
    def num_tasks(self) -> int:
        return len(self.degree_values)

    @property
    def task_of(self) -> dict:
        return {d: t for t, d in enumerate(self.degree_values)}

    def representative(self, degree: int) -> int:
        return _log2_bucket(degree) if self.bucketing else int(degree)

    def tasks(self, degrees) -> np.ndarray:
        """Task id per degree; -1 where the degree was never observed."""
        degrees = np.asarray(degrees, dtype=np.int64)
        if self.bucketing:
            degrees = np.array([_log2_bucket(d) for d in degrees.ravel()], dtype=np.int64).reshape(
                degrees.shape
            )
        vals = np.asarray(self.degree_values, dtype=np.int64)
        if not len(vals):
            return np.full(degrees.shape, -1, dtype=np.int64)
        pos = np.searchsorted(vals, degrees)
        pos_c = np.minimum(pos, len(vals) - 1)
        return np.where(vals[pos_c] == degrees, pos_c, -1)

    def slots(self, degrees) -> np.ndarray:
        """Pooling slot per degree, folding unseen degrees into the nearest
        lower observed degree (or the lowest slot when none is lower)."""
        degrees = np.asarray(degrees, dtype=np.int64)
        if self.bucketing:
            degrees = np.array([_log2_bucket(d) for d in degrees.ravel()], dtype=np.int64).reshape(
                degrees.shape
            )
        vals = np.asarray(self.degree_values, dtype=np.int64)
        pos = np.searchsorted(vals, degrees, side="right") - 1
        return np.maximum(pos, 0)


def build_degree_index(source, bucketing: bool = False, indices: Iterable[int] | None = None) -> DegreeIndex:
    """Collect the distinct degrees of a Graph or GraphSet.

    ``indices`` restricts a GraphSet to the given graphs (the training split)."""
    if isinstance(source, Graph):
        degs = [source.degrees]
    else:
        graphs = source.graphs if indices is None else [source.graphs[i] for i in indices]
        degs = [g.degrees for g in graphs]
    if not degs or sum(len(d) for d in degs) == 0:
        raise ValueError("cannot build a degree index from an empty source")
    values = np.unique(np.concatenate(degs))
    if bucketing:
        values = np.unique([_log2_bucket(d) for d in values])
    return DegreeIndex(tuple(int(d) for d in values), bucketing)


def make_features(graph: Graph, mode: str = "raw", index: DegreeIndex | None = None) -> Graph:
    if mode == "raw":
        if graph.attributes is None:
            raise ValueError("raw feature mode requires node attributes")
        return graph
    if mode != "one_hot_degree":
        raise ValueError(f"unknown feature mode {mode!r}")
    index = index or build_degree_index(graph)
    tasks = index.tasks(graph.degrees)
    x = np.zeros((graph.n, index.num_tasks))
    seen = tasks >= 0
    x[np.flatnonzero(seen), tasks[seen]] = 1.0
    return graph.replace(attributes=x)


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitSpec:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int | None = None

    def sizes(self) -> tuple:
        return len(self.train), len(self.val), len(self.test)


def _floor(x: float) -> int:
    return int(np.floor(x + 1e-9))


def split_random(count: int, fractions=(0.1, 0.2, 0.7), seed: int = 0, stratify_by=None) -> SplitSpec:
    """Random train/val/test partition of ``range(count)``.

    Train and val receive ``floor(fraction * count)`` indices; test gets the rest.
    With ``stratify_by`` each class is split separately and the per-class
    quotas are rounded by largest remainder so the totals stay the same.
    """
    fr = np.asarray(fractions, dtype=float)
    if fr.shape != (3,) or np.any(fr < 0):
        raise ValueError("fractions must be three nonnegative numbers")
    if fr.sum() > 1 + 1e-9:
        raise ValueError(f"fractions sum to {fr.sum():.6g} > 1")
    rng = np.random.default_rng(seed)
    n_train, n_val = _floor(fr[0] * count), _floor(fr[1] * count)
    if stratify_by is None:
        perm = rng.permutation(count)
        parts = perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]
    else:
        y = np.asarray(stratify_by)
        classes = np.unique(y)
        members = {c: rng.permutation(np.flatnonzero(y == c)) for c in classes}
        quotas = {}
        for name, target, f in (("train", n_train, fr[0]), ("val", n_val, fr[1])):
            raw = np.array([f * len(members[c]) for c in classes])
            q = np.floor(raw + 1e-9).astype(int)
            for i in np.argsort(-(raw - q), kind="stable")[: max(0, target - q.sum())]:
                q[i] += 1
            quotas[name] = dict(zip(classes, q))
        tr, va, te = [], [], []
        for c in classes:
            m = members[c]
            a, b = quotas["train"][c], quotas["val"][c]
            tr.append(m[:a])
            va.append(m[a : a + b])
            te.append(m[a + b :])
        parts = tuple(np.concatenate(p) if p else np.empty(0, np.int64) for p in (tr, va, te))
    return SplitSpec(*(np.sort(p).astype(np.int64) for p in parts), seed=seed)
