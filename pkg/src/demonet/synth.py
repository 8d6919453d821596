"""Synthetic graph generators."""

from __future__ import annotations

import heapq

import numpy as np

from .graph import Graph, GraphSet


class ConstructionError(ValueError):
    pass


def erdos_gallai(degrees) -> bool:
    """True iff the sequence is graphical."""
    d = sorted((int(x) for x in degrees), reverse=True)
    if any(x < 0 for x in d) or sum(d) % 2:
        return False
    n = len(d)
    prefix = 0
    for k in range(1, n + 1):
        prefix += d[k - 1]
        tail = sum(min(x, k) for x in d[k:])
        if prefix > k * (k - 1) + tail:
            return False
    return True


def havel_hakimi(degrees) -> list:
    """Edge list realising ``degrees`` exactly (deterministic)."""
    if not erdos_gallai(degrees):
        raise ConstructionError(f"degree sequence is not graphical (Erdos-Gallai): {list(degrees)}")
    heap = [(-int(d), v) for v, d in enumerate(degrees) if d > 0]
    heapq.heapify(heap)
    edges = []
    while heap:
        d, v = heapq.heappop(heap)
        d = -d
        partners = [heapq.heappop(heap) for _ in range(d)]
        for pd, u in partners:
            edges.append((v, u))
            if pd + 1 < 0:
                heapq.heappush(heap, (pd + 1, u))
    return edges


def rewire(edges, rng: np.random.Generator, swaps_per_edge: int = 10) -> list:
    """Degree-preserving double-edge swaps: (a,b),(c,d) -> (a,d),(c,b)."""
    edges = [tuple(sorted(e)) for e in edges]
    present = set(edges)
    m = len(edges)
    if m < 2:
        return edges
    for _ in range(swaps_per_edge * m):
        i, j = rng.integers(m, size=2)
        if i == j:
            continue
        a, b = edges[i]
        c, d = edges[j]
        if rng.random() < 0.5:
            c, d = d, c
        if len({a, b, c, d}) < 4:
            continue
        e1, e2 = tuple(sorted((a, d))), tuple(sorted((c, b)))
        if e1 in present or e2 in present:
            continue
        present.difference_update((edges[i], edges[j]))
        present.update((e1, e2))
        edges[i], edges[j] = e1, e2
    return edges


def _ones(n: int) -> np.ndarray:
    return np.ones((n, 1))


def cycle(n: int) -> Graph:
    if n < 3:
        raise ConstructionError("a cycle needs at least 3 nodes")
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)], attributes=_ones(n))


def disjoint_cycles(k: int, length: int) -> Graph:
    if length < 3:
        raise ConstructionError("a cycle needs at least 3 nodes")
    edges = [(c * length + i, c * length + (i + 1) % length) for c in range(k) for i in range(length)]
    return Graph.from_edges(k * length, edges, attributes=_ones(k * length))


def regular(n: int, r: int, seed: int | None = None) -> Graph:
    """Circulant r-regular graph; rewired when a seed is given."""
    if (n * r) % 2 or r >= n or r < 0:
        raise ConstructionError(f"no simple {r}-regular graph on {n} nodes")
    edges = [(i, (i + s) % n) for i in range(n) for s in range(1, r // 2 + 1)]
    if r % 2:
        edges += [(i, i + n // 2) for i in range(n // 2)]
    if seed is not None:
        edges = rewire(edges, np.random.default_rng(seed))
    return Graph.from_edges(n, edges, attributes=_ones(n))


def from_degree_sequence(degrees, seed: int | None = None) -> Graph:
    """Exact-degree graph: Havel-Hakimi construction, then seeded rewiring."""
    edges = havel_hakimi(degrees)
    if seed is not None:
        edges = rewire(edges, np.random.default_rng(seed))
    n = len(degrees)
    return Graph.from_edges(n, edges, attributes=_ones(n))


def degree_classes(spec, seed: int = 0) -> Graph:
    """Graph whose node labels are exactly determined by degree.

    ``spec`` lists ``(class_id, target_degree, node_count)`` triples. Node
    attributes are a constant 1 so the label is only recoverable from structure.
    """
    degrees, labels = [], []
    for class_id, deg, count in spec:
        degrees += [int(deg)] * int(count)
        labels += [int(class_id)] * int(count)
    g = from_degree_sequence(degrees, seed)
    if not np.array_equal(g.degrees, degrees):
        raise ConstructionError("constructed degrees differ from targets")
    return g.replace(node_labels=np.asarray(labels))


DEFAULT_DEGREE_CLASSES = ((0, 2, 30), (1, 3, 30), (2, 4, 30))


def gnm(n: int, m: int, seed: int = 0, attr_dim: int = 1) -> Graph:
    """``m`` distinct edges drawn uniformly at random among ``n`` nodes."""
    if m > n * (n - 1) // 2:
        raise ConstructionError("too many edges requested")
    rng = np.random.default_rng(seed)
    keys = np.empty(0, dtype=np.int64)
    while len(keys) < m:
        u = rng.integers(n, size=2 * (m - len(keys)) + 16)
        v = rng.integers(n, size=len(u))
        ok = u != v
        lo, hi = np.minimum(u[ok], v[ok]), np.maximum(u[ok], v[ok])
        new = lo * n + hi
        # keep first occurrences in draw order so the result only depends on the seed
        keys = np.concatenate([keys, new])
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)]
    keys = keys[:m]
    edges = np.stack([keys // n, keys % n], axis=1)
    x = np.ones((n, 1)) if attr_dim == 1 else rng.standard_normal((n, attr_dim))
    return Graph.from_edges(n, edges, attributes=x)


DEFAULT_DEGREE_MIX = ((12, 12, 12), (13, 10, 13))


def degree_mix_set(num_graphs: int = 90, seed: int = 0, compositions=DEFAULT_DEGREE_MIX) -> GraphSet:
    """Two-class graph collection with mean degree exactly 3 and constant attributes.

    ``compositions[c]`` gives the number of degree-2, degree-3 and degree-4
    nodes of every class-``c`` graph. The default classes differ by two
    degree-3 nodes traded for one degree-2 and one degree-4 node, so the
    sizes match and the degree histograms differ only slightly. Graph ``i``
    has label ``i % 2``; wiring and node order are random.
    """
    for a, b, c in compositions:
        if 2 * a + 3 * b + 4 * c != 3 * (a + b + c):
            raise ConstructionError(f"composition {(a, b, c)} does not have mean degree 3")
    rng = np.random.default_rng(seed)
    graphs, labels = [], []
    for i in range(num_graphs):
        label = i % 2
        a, b, c = compositions[label]
        g = from_degree_sequence([2] * a + [3] * b + [4] * c, int(rng.integers(2**31)))
        graphs.append(g.permute(rng.permutation(g.n)))
        labels.append(label)
    return GraphSet(graphs, np.asarray(labels))
