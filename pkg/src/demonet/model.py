"""DEMO-Net layers, the GCN baseline, degree-sliced pooling and full networks."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import load_params, save_params
from .graph import DegreeIndex, Graph
from .hashing import HashSpec, task_specs

log = logging.getLogger(__name__)

VARIANTS = ("weight", "hash", "gcn")


class UnseenDegreeError(KeyError):
    pass


@dataclass
class ModelConfig:
    variant: str = "weight"
    layers: int = 2
    hidden: int = 64
    num_classes: int = 2
    task: str = "node"
    pooling: str = "degree"  # graph task only: "degree" or "mean"
    fallback: str = "global"  # unseen degree: "global" weights/hash only, or "strict"
    hash_dim: int | None = None
    hash_seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.hidden % 2:
            raise ValueError("hidden width must be even (seed and neighbor halves)")
        if self.task not in ("node", "graph"):
            raise ValueError("task must be 'node' or 'graph'")
        if self.pooling not in ("degree", "mean"):
            raise ValueError("pooling must be 'degree' or 'mean'")
        if self.fallback not in ("global", "strict"):
            raise ValueError("fallback must be 'global' or 'strict'")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)


@dataclass
class GraphBatch:
    """Disjoint union of several graphs plus the owning graph of every node."""

    graph: Graph
    graph_of_node: np.ndarray
    num_graphs: int
    sizes: np.ndarray = field(default=None)


def merge_graphs(graphs) -> GraphBatch:
    sizes = np.array([g.n for g in graphs], dtype=np.int64)
    node_base = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    edge_base = np.concatenate([[0], np.cumsum([len(g.csr_neighbors) for g in graphs])[:-1]])
    offsets = np.concatenate(
        [[0]] + [g.csr_offsets[1:] + eb for g, eb in zip(graphs, edge_base)]
    )
    neighbors = np.concatenate(
        [g.csr_neighbors + nb for g, nb in zip(graphs, node_base)] or [np.empty(0, np.int64)]
    )
    attrs = np.concatenate([g.attributes for g in graphs], axis=0)
    merged = Graph(int(sizes.sum()), offsets, neighbors, attributes=attrs)
    return GraphBatch(merged, np.repeat(np.arange(len(graphs)), sizes), len(graphs), sizes)


@dataclass
class GraphRepr:
    """Pooled graph vector with its (layer, degree, offset, width) slot table."""

    vector: np.ndarray
    slots: list

    def get(self, k: int, i: int, j: int) -> float:
        for layer, slot, _deg, offset, width in self.slots:
            if layer == k and slot == i:
                if not 0 <= j < width:
                    raise IndexError(f"feature {j} outside width {width}")
                return float(self.vector[offset + j])
        raise IndexError(f"no slot ({k}, {i})")


class DemoNet:
    """Degree-specific GNN (``weight`` / ``hash`` variants) or the GCN baseline.

    Parameters are bias-free. Each DEMO-Net hidden layer outputs
    ``[relu(H W0) | relu(neighbor aggregation)]`` with ``hidden/2`` units per half.
    """

    def __init__(self, config: ModelConfig, in_dim: int, degree_index: DegreeIndex, seed: int = 0):
        self.config = config
        self.in_dim = in_dim
        self.degree_index = degree_index
        self.seed = seed
        self.dtype = np.dtype(config.dtype)
        self.unseen_degree_count = 0
        rng = np.random.default_rng(seed)
        self.params: dict[str, ad.Tensor] = {}
        self._hash = []
        f_in = in_dim
        half = config.hidden // 2
        T = degree_index.num_tasks
        for k in range(1, config.layers + 1):
            if config.variant == "gcn":
                self._add(f"l{k}.W", glorot(rng, f_in, config.hidden, self.dtype))
            else:
                self._add(f"l{k}.W0", glorot(rng, f_in, half, self.dtype))
                if config.variant == "weight":
                    self._add(f"l{k}.Wg", glorot(rng, f_in, half, self.dtype))
                    for t in range(T):
                        self._add(f"l{k}.Wdeg{t}", glorot(rng, f_in, half, self.dtype))
                else:
                    m = config.hash_dim or f_in
                    self._add(f"l{k}.W", glorot(rng, m, half, self.dtype))
                    master = HashSpec(m, (config.hash_seed + 2 * k) & (2**64 - 1),
                                      (config.hash_seed + 2 * k + 1) & (2**64 - 1))
                    specs = task_specs(master, T, f_in)
                    g1, g2 = master.tables(f_in)
                    t1 = np.stack([s.tables(f_in)[0] for s in specs]) if T else np.zeros((0, f_in), np.int64)
                    t2 = np.stack([s.tables(f_in)[1] for s in specs]) if T else np.zeros((0, f_in))
                    self._hash.append(dict(m=m, master=master, specs=specs,
                                           g_xi1=g1[None], g_xi2=g2[None].astype(self.dtype),
                                           t_xi1=t1, t_xi2=t2.astype(self.dtype)))
            f_in = config.hidden
        self._add("cls.W", glorot(rng, self.repr_dim() if config.task == "graph" else f_in,
                                  config.num_classes, self.dtype))

    def _add(self, name, value):
        self.params[name] = ad.param(value, name=name)

    # -- shapes ---------------------------------------------------------
    def layer_widths(self) -> list:
        return [self.in_dim] + [self.config.hidden] * self.config.layers

    def repr_dim(self) -> int:
        widths = self.layer_widths()
        if self.config.pooling == "mean":
            return sum(widths)
        return self.degree_index.num_tasks * sum(widths)

    def num_parameters(self, layer: int | None = None) -> int:
        if layer is None:
            return sum(p.value.size for p in self.params.values())
        return sum(p.value.size for n, p in self.params.items() if n.startswith(f"l{layer}."))

    def dropout_shapes(self, n: int) -> list:
        return [(n, w) for w in self.layer_widths()[:-1]]

    # -- convolution ----------------------------------------------------
    def node_tasks(self, graph: Graph) -> np.ndarray:
        tasks = self.degree_index.tasks(graph.degrees)
        unseen = tasks < 0
        if np.any(unseen):
            missing = sorted(set(int(d) for d in graph.degrees[unseen]))
            if self.config.fallback == "strict":
                raise UnseenDegreeError(f"degree(s) {missing} have no task in the degree index")
            self.unseen_degree_count += int(unseen.sum())
            log.debug("unseen degrees %s fall back to the global map", missing)
        return tasks

    def seed_map(self, k: int, h: ad.Tensor) -> ad.Tensor:
        return ad.relu(ad.matmul(h, self.params[f"l{k}.W0"]))

    def conv(self, k: int, graph: Graph, h: ad.Tensor, tasks=None) -> ad.Tensor:
        v = self.config.variant
        if v == "gcn":
            return self.gcn_conv(k, graph, h)
        if tasks is None:
            tasks = self.node_tasks(graph)
        s = ad.neighbor_sum(graph, h)
        if v == "weight":
            T = self.degree_index.num_tasks
            pre = ad.matmul(s, self.params[f"l{k}.Wg"])
            if T:
                ws = [self.params[f"l{k}.Wdeg{t}"] for t in range(T)]
                pre = ad.add(pre, ad.grouped_matmul(s, ws, tasks))
        else:
            hs = self._hash[k - 1]
            z = ad.hash_project(s, np.zeros(graph.n, np.int64), hs["g_xi1"], hs["g_xi2"], hs["m"])
            if len(hs["t_xi1"]):
                z = ad.add(z, ad.hash_project(s, tasks, hs["t_xi1"], hs["t_xi2"], hs["m"]))
            pre = ad.matmul(z, self.params[f"l{k}.W"])
        return ad.concat(self.seed_map(k, h), ad.relu(pre))

    def gcn_conv(self, k: int, graph: Graph, h: ad.Tensor) -> ad.Tensor:
        s = (1.0 / np.sqrt(graph.degrees + 1.0)).astype(h.dtype)[:, None]
        hs = ad.mul_const(h, s)
        prop = ad.mul_const(ad.add(ad.neighbor_sum(graph, hs), hs), s)
        return ad.relu(ad.matmul(prop, self.params[f"l{k}.W"]))

    def layer_outputs(self, graph: Graph, dropout_masks=None) -> list:
        """``[H_0, ..., H_K]``; ``H_0`` is the attribute matrix. Dropout masks
        (already scaled) multiply each hidden layer's input."""
        if graph.attributes is None:
            raise ValueError("graph has no node attributes")
        if graph.attr_dim != self.in_dim:
            raise ValueError(f"model expects {self.in_dim} input features, graph has {graph.attr_dim}")
        h = ad.Tensor(graph.attributes.astype(self.dtype))
        outs = [h]
        tasks = None if self.config.variant == "gcn" else self.node_tasks(graph)
        for k in range(1, self.config.layers + 1):
            x = outs[-1]
            if dropout_masks is not None:
                x = ad.mul_const(x, dropout_masks[k - 1])
            outs.append(self.conv(k, graph, x, tasks))
        return outs

    # -- readout --------------------------------------------------------
    def pool(self, outs, batch: GraphBatch) -> ad.Tensor:
        B = batch.num_graphs
        gid = batch.graph_of_node
        pooled = None
        if self.config.pooling == "mean":
            inv = (1.0 / np.maximum(batch.sizes, 1))[gid][:, None].astype(self.dtype)
        else:
            T = self.degree_index.num_tasks
            seg = gid * T + self.degree_index.slots(batch.graph.degrees)
        for h in outs:
            if self.config.pooling == "mean":
                piece = ad.segment_sum(ad.mul_const(h, inv), gid, B)
            else:
                piece = ad.reshape(ad.segment_sum(h, seg, B * T), (B, T * h.shape[1]))
            pooled = piece if pooled is None else ad.concat(pooled, piece)
        return pooled

    def forward(self, data, dropout_masks=None) -> ad.Tensor:
        """Logits: ``n x C`` for a Graph (node task), ``B x C`` for a GraphBatch."""
        if self.config.task == "node":
            if not isinstance(data, Graph):
                raise TypeError("node-task model expects a Graph")
            outs = self.layer_outputs(data, dropout_masks)
            return ad.matmul(outs[-1], self.params["cls.W"])
        batch = data if isinstance(data, GraphBatch) else merge_graphs(list(data))
        outs = self.layer_outputs(batch.graph, dropout_masks)
        return ad.matmul(self.pool(outs, batch), self.params["cls.W"])

    def graph_repr(self, graph: Graph) -> GraphRepr:
        with ad.no_tape():
            outs = self.layer_outputs(graph)
        slots, parts, offset = [], [], 0
        if self.config.pooling == "mean":
            for k, h in enumerate(outs):
                parts.append(h.value.mean(axis=0) if graph.n else np.zeros(h.shape[1]))
                slots.append((k, 0, None, offset, h.shape[1]))
                offset += h.shape[1]
        else:
            T = self.degree_index.num_tasks
            seg = self.degree_index.slots(graph.degrees)
            for k, h in enumerate(outs):
                table = np.zeros((T, h.shape[1]), dtype=h.dtype)
                np.add.at(table, seg, h.value)
                for i, d in enumerate(self.degree_index.degree_values):
                    slots.append((k, i, d, offset, h.shape[1]))
                    offset += h.shape[1]
                parts.append(table.ravel())
        return GraphRepr(np.concatenate(parts), slots)

    # -- parameters -----------------------------------------------------
    def param_list(self) -> list:
        return list(self.params.values())

    def get_state(self) -> dict:
        return {k: p.value.copy() for k, p in self.params.items()}

    def set_state(self, state: dict) -> None:
        for k, v in state.items():
            self.params[k].value[...] = v

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_params(directory / "model.dmn", self.get_state())
        header = {
            "config": asdict(self.config),
            "in_dim": self.in_dim,
            "seed": self.seed,
            "degree_values": list(self.degree_index.degree_values),
            "bucketing": self.degree_index.bucketing,
            "hash_seeds": [[h["master"].seed1, h["master"].seed2] for h in self._hash],
        }
        (directory / "model.json").write_text(json.dumps(header, indent=2))

    @classmethod
    def load(cls, directory) -> "DemoNet":
        directory = Path(directory)
        header = json.loads((directory / "model.json").read_text())
        index = DegreeIndex(tuple(header["degree_values"]), header["bucketing"])
        model = cls(ModelConfig(**header["config"]), header["in_dim"], index, header["seed"])
        model.set_state(load_params(directory / "model.dmn"))
        return model


def sample_dropout_masks(rng: np.random.Generator, shapes, p: float, dtype=np.float32) -> list | None:
    """Inverted-dropout masks: keep with probability ``1-p``, scale by ``1/(1-p)``."""
    if p <= 0:
        return None
    keep = 1.0 - p
    return [((rng.random(s) < keep) / keep).astype(dtype) for s in shapes]
