"""1-WL colour refinement, canonical subtree codes and WL-style graph kernels."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from math import comb

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import ShapeError
from .graph import Graph

NON_ISOMORPHIC = "non_isomorphic"
POSSIBLY_ISOMORPHIC = "possibly_isomorphic"


@dataclass(frozen=True, eq=False)
class ColorMap:
    colors: np.ndarray
    round: int = 0

    def histogram(self) -> Counter:
        return Counter(self.colors.tolist())

    def num_colors(self) -> int:
        return len(np.unique(self.colors))


def attribute_dictionary(graphs) -> dict:
    """Shared id for every distinct attribute row, in sorted row order."""
    rows = set()
    for g in graphs:
        if g.attributes is not None:
            rows.update(map(tuple, g.attributes.tolist()))
    return {row: i for i, row in enumerate(sorted(rows))}


def initial_colors(graph: Graph, attr_ids: dict | None = None) -> ColorMap:
    if graph.attributes is None or attr_ids is None:
        return ColorMap(np.zeros(graph.n, dtype=np.int64))
    return ColorMap(np.array([attr_ids[tuple(r)] for r in graph.attributes.tolist()], dtype=np.int64))


def wl_refine(graph: Graph, init: ColorMap, table: dict | None = None) -> ColorMap:
    """One refinement round: recolour by (own colour, sorted neighbour colours).

    Pass the same ``table`` to refine several graphs under one dictionary.
    """
    table = {} if table is None else table
    c = init.colors
    new = np.empty(graph.n, dtype=np.int64)
    for v in range(graph.n):
        sig = (int(c[v]), tuple(sorted(c[graph.neighbors(v)].tolist())))
        new[v] = table.setdefault(sig, len(table))
    return ColorMap(new, init.round + 1)


def wl_test(g1: Graph, g2: Graph, max_rounds: int | None = None) -> str:
    """Joint 1-WL test. ``non_isomorphic`` is a proof; the other answer is not."""
    ids = attribute_dictionary([g1, g2]) if g1.attributes is not None and g2.attributes is not None else None
    c1, c2 = initial_colors(g1, ids), initial_colors(g2, ids)
    max_rounds = g1.n + g2.n if max_rounds is None else max_rounds
    prev = len(set(c1.colors.tolist()) | set(c2.colors.tolist()))
    for _ in range(max_rounds + 1):
        if c1.histogram() != c2.histogram():
            return NON_ISOMORPHIC
        table = {}
        c1, c2 = wl_refine(g1, c1, table), wl_refine(g2, c2, table)
        if len(table) == prev:
            # partition stable: further rounds cannot separate the histograms
            return POSSIBLY_ISOMORPHIC if c1.histogram() == c2.histogram() else NON_ISOMORPHIC
        prev = len(table)
    return POSSIBLY_ISOMORPHIC


# ---------------------------------------------------------------------------
# subtree codes


@dataclass(frozen=True)
class SubtreeCode:
    seed_code: int
    degree: int
    neighbor_multiset: tuple


def subtree_code(graph: Graph, v: int, attr_ids: dict) -> SubtreeCode:
    """Canonical code of the depth-1 subtree rooted at ``v``: neighbour order
    is discarded by sorting the neighbour attribute ids."""
    rows = graph.attributes.tolist()

    def lookup(u):
        try:
            return attr_ids[tuple(rows[u])]
        except KeyError:
            raise KeyError(f"attribute of node {u} not in dictionary") from None

    nbrs = tuple(sorted(lookup(int(u)) for u in graph.neighbors(v)))
    return SubtreeCode(lookup(v), len(nbrs), nbrs)


def multiset_rank(sorted_ids) -> int:
    """Combinatorial-number-system rank of a sorted multiset of naturals;
    injective among multisets of the same size."""
    return sum(comb(a + i, i + 1) for i, a in enumerate(sorted_ids))


def subtree_to_naturals(code: SubtreeCode, max_degree: int) -> tuple:
    """Injective map to N^2: the seed lands in the residue class 0 modulo
    ``max_degree + 1``, the neighbour multiset in the residue class of its degree."""
    if code.degree > max_degree:
        raise ValueError(f"degree {code.degree} exceeds max_degree {max_degree}")
    dm = max_degree + 1
    return code.seed_code * dm, multiset_rank(code.neighbor_multiset) * dm + code.degree


# ---------------------------------------------------------------------------
# kernels


def _union_vocab(*degree_arrays) -> np.ndarray:
    return np.unique(np.concatenate([np.asarray(d, dtype=np.int64) for d in degree_arrays]))


def dwl_feature_map(features, degrees, vocab) -> np.ndarray:
    """Concatenated degree-sliced feature sums, slots in ``vocab`` order."""
    h = np.asarray(features, dtype=np.float64)
    degrees = np.asarray(degrees, dtype=np.int64)
    vocab = np.asarray(vocab, dtype=np.int64)
    pos = np.searchsorted(vocab, degrees)
    if len(degrees) and (np.any(pos >= len(vocab)) or np.any(vocab[np.minimum(pos, len(vocab) - 1)] != degrees)):
        raise ValueError("degree outside vocabulary")
    return kernels.segment_sum(h, pos, len(vocab)).ravel()


def dwl_kernel(h1, deg1, h2, deg2) -> float:
    """Sum of feature inner products over equal-degree node pairs (factored form)."""
    h1, h2 = np.atleast_2d(np.asarray(h1, float)), np.atleast_2d(np.asarray(h2, float))
    if h1.shape[1] != h2.shape[1]:
        raise ShapeError(f"dwl_kernel: feature dims {h1.shape[1]} vs {h2.shape[1]}")
    vocab = _union_vocab(deg1, deg2)
    return float(dwl_feature_map(h1, deg1, vocab) @ dwl_feature_map(h2, deg2, vocab))


def mwl_kernel(h1, h2) -> float:
    h1, h2 = np.atleast_2d(np.asarray(h1, float)), np.atleast_2d(np.asarray(h2, float))
    if h1.shape[1] != h2.shape[1]:
        raise ShapeError(f"mwl_kernel: feature dims {h1.shape[1]} vs {h2.shape[1]}")
    return float(h1.sum(axis=0) @ h2.sum(axis=0))


def _discrete(c) -> np.ndarray:
    a = np.asarray(c.colors if isinstance(c, ColorMap) else c)
    if a.dtype.kind == "f":
        if a.ndim != 1 or not np.all(np.isfinite(a)) or np.any(a != np.round(a)):
            raise ValueError("WL subtree kernel needs discrete colours, not continuous attribute vectors")
        a = a.astype(np.int64)
    if a.ndim != 1 or a.dtype.kind not in "iu":
        raise ValueError("WL subtree kernel needs a 1-D array of discrete colours")
    return a


def wl_subtree_kernel(c1, c2) -> float:
    """Number of node pairs with equal colour."""
    h1, h2 = Counter(_discrete(c1).tolist()), Counter(_discrete(c2).tolist())
    return float(sum(cnt * h2[c] for c, cnt in h1.items()))


@dataclass(frozen=True, eq=False)
class KernelGram:
    values: np.ndarray

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values).min())

    def is_psd(self, tol: float = 1e-8) -> bool:
        return bool(np.allclose(self.values, self.values.T) and self.min_eigenvalue() > -tol)

    def to_csv(self, path, ids=None) -> None:
        ids = list(range(len(self.values))) if ids is None else list(ids)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["graph_id"] + ids)
            for gid, row in zip(ids, self.values):
                w.writerow([gid] + [repr(float(x)) for x in row])


def gram(items, kernel) -> KernelGram:
    t = len(items)
    k = np.zeros((t, t))
    for a in range(t):
        for b in range(a, t):
            k[a, b] = k[b, a] = kernel(items[a], items[b])
    return KernelGram(k)


def wl_colorings(graphs, rounds: int) -> list:
    """Per-graph list of colour maps for rounds ``0..rounds`` under one shared
    dictionary per round."""
    ids = attribute_dictionary(graphs) if all(g.attributes is not None for g in graphs) else None
    cur = [initial_colors(g, ids) for g in graphs]
    out = [[c] for c in cur]
    for _ in range(rounds):
        table = {}
        cur = [wl_refine(g, c, table) for g, c in zip(graphs, cur)]
        for lst, c in zip(out, cur):
            lst.append(c)
    return out


def gram_matrix(graphs, kind: str = "dwl", rounds: int = 3) -> KernelGram:
    """Gram matrix over raw attributes (``dwl``, ``mwl``) or WL colours
    summed over refinement rounds (``wl_subtree``)."""
    if kind == "dwl":
        return gram(graphs, lambda a, b: dwl_kernel(a.attributes, a.degrees, b.attributes, b.degrees))
    if kind == "mwl":
        return gram(graphs, lambda a, b: mwl_kernel(a.attributes, b.attributes))
    if kind == "wl_subtree":
        cols = wl_colorings(graphs, rounds)
        # round r colours live in their own namespace, so summing per-round kernels is exact
        return gram(cols, lambda a, b: sum(wl_subtree_kernel(x, y) for x, y in zip(a, b)))
    raise ValueError(f"unknown kernel {kind!r}")


# ---------------------------------------------------------------------------
# graph representation as a kernel evaluation


@dataclass
class RkhsCheck:
    lhs: float
    rhs: float
    abs_error: float
    branch: str
    kernel_value: float
    preactivation_sum: float


def rkhs_identity_check(model, graph: Graph, k: int, i: int, j: int) -> RkhsCheck:
    """Compare a pooled coordinate ``h_G[k, i, j]`` against
    ``relu(K_DWL(G_{k-1}, R))`` for the reference graph ``R`` built from the
    parameter column that produced coordinate ``j``.

    ``R`` has ``n`` nodes, all in degree slot ``i``, each carrying
    ``w / n``. It is never materialised as edges. For the neighbour half the
    previous-layer features are replaced by their neighbourhood sums.
    ``preactivation_sum`` is the slot sum taken before the nonlinearity.
    """
    cfg = model.config
    if cfg.variant != "weight":
        raise ValueError(f"identity check is defined for the weight variant, not {cfg.variant!r}")
    if cfg.pooling != "degree":
        raise ValueError("identity check needs degree pooling")
    if not 1 <= k <= cfg.layers:
        raise ValueError(f"layer k must be in 1..{cfg.layers}")
    index = model.degree_index
    if not 0 <= i < index.num_tasks:
        raise ValueError(f"degree slot {i} outside 0..{index.num_tasks - 1}")
    half = cfg.hidden // 2
    if not 0 <= j < cfg.hidden:
        raise ValueError(f"feature {j} outside 0..{cfg.hidden - 1}")

    with ad.no_tape():
        outs = model.layer_outputs(graph)
    prev = outs[k - 1].value.astype(np.float64)
    lhs = model.graph_repr(graph).get(k, i, j)
    d_i = index.degree_values[i]
    slot_deg = np.asarray(index.degree_values, dtype=np.int64)[index.slots(graph.degrees)]
    if j < half:
        branch = "seed"
        w = model.params[f"l{k}.W0"].value[:, j].astype(np.float64)
        feats = prev
    else:
        branch = "neighbor"
        w_hat = model.params[f"l{k}.Wg"].value.astype(np.float64)
        task = index.tasks([d_i])[0]
        if task >= 0:
            w_hat = w_hat + model.params[f"l{k}.Wdeg{task}"].value
        w = w_hat[:, j - half]
        feats = kernels.neighbor_sum(graph.csr_offsets, graph.csr_neighbors, prev)
    n = graph.n
    ref_feats = np.tile(w / n, (n, 1))
    ref_degs = np.full(n, d_i, dtype=np.int64)
    kval = dwl_kernel(feats, slot_deg, ref_feats, ref_degs) if n else 0.0
    rhs = max(kval, 0.0)
    members = slot_deg == d_i
    pre = float((feats[members] @ w).sum())
    return RkhsCheck(lhs, rhs, abs(lhs - rhs), branch, kval, pre)
