"""Readers for edge lists, node tables and indicator-format graph collections."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .graph import UNLABELED, FormatError, Graph, GraphSet, ParseError, ValidationError

log = logging.getLogger(__name__)


def load_edge_list(path, id_map_path=None) -> Graph:
    """Read a whitespace-separated ``u v`` edge list.

    External ids are remapped to dense 0-based ids in ascending order; the map
    is kept in ``graph.meta['external_ids']`` and optionally written as CSV.
    """
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected two node ids, got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
            if u < 0 or v < 0:
                raise ValidationError(f"{path}:{lineno}: negative node id")
            pairs.append((u, v))
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    external = np.unique(arr)
    edges = np.searchsorted(external, arr)
    g = Graph.from_edges(len(external), edges, meta={"external_ids": external})
    if g.meta["self_loops_dropped"]:
        log.warning("%s: self_loops_dropped=%d", path, g.meta["self_loops_dropped"])
    if id_map_path is not None:
        write_id_map(id_map_path, external)
    return g


def write_id_map(path, external_ids) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["external_id", "internal_id"])
        for i, e in enumerate(external_ids):
            w.writerow([int(e), i])


def _is_int(s: str) -> bool:
    try:
        int(s)
        return True
    except ValueError:
        return False


def load_node_table(path, graph: Graph, mode: str = "attributes") -> Graph:
    """Attach node attributes (``node_id, v1..vD``) or class labels (``node_id, class``).

    Missing rows become zero attributes or the unlabeled sentinel.
    """
    if mode not in ("attributes", "labels"):
        raise ValueError(f"mode must be 'attributes' or 'labels', not {mode!r}")
    external = graph.meta.get("external_ids")
    lookup = None if external is None else {int(e): i for i, e in enumerate(external)}
    rows = {}
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            rec = [c.strip() for c in rec]
            if not rec or rec == [""]:
                continue
            if lineno == 1 and not _is_int(rec[0]):
                continue  # header
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} columns, got {len(rec)}")
            node = int(rec[0])
            if lookup is not None:
                if node not in lookup:
                    raise ValidationError(f"{path}:{lineno}: unknown node id {node}")
                node = lookup[node]
            if not 0 <= node < graph.n:
                raise ValidationError(f"{path}:{lineno}: node id {node} out of range")
            if node in rows:
                raise ValidationError(f"{path}:{lineno}: duplicate node id {rec[0]}")
            rows[node] = rec[1:]
    if mode == "labels":
        if width is not None and width != 2:
            raise FormatError(f"{path}: label table needs exactly 2 columns")
        y = np.full(graph.n, UNLABELED, dtype=np.int64)
        for v, r in rows.items():
            y[v] = int(r[0])
        return graph.replace(node_labels=y)
    dim = 0 if width is None else width - 1
    x = np.zeros((graph.n, dim))
    for v, r in rows.items():
        x[v] = [float(c) for c in r]
    return graph.replace(attributes=x)


def _read_ints(path) -> np.ndarray:
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                vals.append([int(float(c)) for c in line.replace(",", " ").split()])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: cannot parse {line!r}") from None
    return np.asarray(vals, dtype=np.int64)


def _find(directory: Path, name: str) -> Path | None:
    p = directory / name
    if p.exists():
        return p
    hits = sorted(directory.glob(f"*_{name}"))
    return hits[0] if hits else None


def load_graph_dataset(directory) -> GraphSet:
    """Read a graph collection stored as ``A.txt`` (1-based edge pairs),
    ``graph_indicator.txt``, ``graph_labels.txt`` and optional
    ``node_labels.txt`` / ``node_attributes.txt`` (``<NAME>_`` prefixes accepted).
    """
    directory = Path(directory)
    paths = {k: _find(directory, f"{k}.txt") for k in
             ("A", "graph_indicator", "graph_labels", "node_labels", "node_attributes")}
    for k in ("A", "graph_indicator", "graph_labels"):
        if paths[k] is None:
            raise FileNotFoundError(f"{directory}: missing {k}.txt")
    indicator = _read_ints(paths["graph_indicator"]).ravel()
    num_nodes = len(indicator)
    gids = np.unique(indicator)
    if gids[0] != 1 or not np.array_equal(gids, np.arange(1, len(gids) + 1)):
        raise ValidationError("graph_indicator ids must be contiguous 1..N without gaps")
    edges = _read_ints(paths["A"]).reshape(-1, 2) - 1
    if len(edges) and (edges.min() < 0 or edges.max() >= num_nodes):
        raise ValidationError("A.txt references a node outside graph_indicator")
    cross = indicator[edges[:, 0]] != indicator[edges[:, 1]]
    if np.any(cross):
        u, v = edges[np.argmax(cross)] + 1
        raise ValidationError(f"edge ({u},{v}) joins nodes of different graphs")
    raw_labels = _read_ints(paths["graph_labels"]).ravel()
    if len(raw_labels) != len(gids):
        raise ValidationError("graph_labels must have one line per graph")
    classes = np.unique(raw_labels)
    graph_labels = np.searchsorted(classes, raw_labels)

    attrs = None
    if paths["node_attributes"] is not None:
        attrs = np.loadtxt(paths["node_attributes"], delimiter=",", ndmin=2, dtype=np.float64)
    elif paths["node_labels"] is not None:
        cats = _read_ints(paths["node_labels"])[:, 0]
        vocab = np.unique(cats)
        attrs = np.zeros((num_nodes, len(vocab)))
        attrs[np.arange(num_nodes), np.searchsorted(vocab, cats)] = 1.0
    if attrs is not None and len(attrs) != num_nodes:
        raise ValidationError("node attribute/label file length differs from graph_indicator")

    graphs = []
    for gid in gids:
        nodes = np.flatnonzero(indicator == gid)
        local = np.full(num_nodes, -1, dtype=np.int64)
        local[nodes] = np.arange(len(nodes))
        mine = edges[indicator[edges[:, 0]] == gid]
        x = attrs[nodes] if attrs is not None else np.ones((len(nodes), 1))
        graphs.append(Graph.from_edges(len(nodes), local[mine], attributes=x))
    return GraphSet(graphs, graph_labels)


# ---------------------------------------------------------------------------
# writers (inverse of the readers above)


def write_edge_list(path, graph: Graph) -> None:
    """One ``u v`` line per undirected edge. Isolated nodes are not recorded."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in graph.edges().tolist():
            fh.write(f"{u} {v}\n")


def write_node_table(path, graph: Graph, mode: str = "attributes") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if mode == "labels":
            w.writerow(["node", "label"])
            for v, y in enumerate(graph.node_labels.tolist()):
                w.writerow([v, y])
        elif mode == "attributes":
            w.writerow(["node"] + [f"x{j}" for j in range(graph.attr_dim)])
            for v, row in enumerate(graph.attributes.tolist()):
                w.writerow([v] + [repr(float(c)) for c in row])
        else:
            raise ValueError(f"mode must be 'attributes' or 'labels', not {mode!r}")


def write_graph_dataset(gs: GraphSet, directory, name: str = "") -> Path:
    """Write ``gs`` in the indicator format read by :func:`load_graph_dataset`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    prefix = f"{name}_" if name else ""
    base = 0
    with open(directory / f"{prefix}A.txt", "w") as fa, \
            open(directory / f"{prefix}graph_indicator.txt", "w") as fi:
        for gid, g in enumerate(gs.graphs, 1):
            for u, v in g.edges().tolist():
                fa.write(f"{u + base + 1}, {v + base + 1}\n{v + base + 1}, {u + base + 1}\n")
            fi.write(f"{gid}\n" * g.n)
            base += g.n
    with open(directory / f"{prefix}graph_labels.txt", "w") as fl:
        fl.write("".join(f"{int(y)}\n" for y in gs.graph_labels))
    attrs = np.concatenate([g.attributes for g in gs.graphs])
    np.savetxt(directory / f"{prefix}node_attributes.txt", attrs, delimiter=", ", fmt="%.17g")
    return directory
