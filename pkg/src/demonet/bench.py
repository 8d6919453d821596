"""Per-epoch training time against graph size."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .graph import build_degree_index
from .model import DemoNet, ModelConfig, sample_dropout_masks
from .synth import gnm
from .training import loss_with_l2


@dataclass
class BenchRow:
    n: int
    edges: int
    ms_per_epoch: float
    backend: str
    variant: str


def bench_graph(n: int, features: int, seed: int = 0):
    """Random graph with ``2n`` uniform edges, Gaussian attributes and two
    random node classes."""
    rng = np.random.default_rng([seed, n])
    g = gnm(n, 2 * n, seed=int(rng.integers(2**31)))
    return g.replace(attributes=rng.standard_normal((n, features)), node_labels=rng.integers(0, 2, n))


def time_epochs(n: int, variant: str = "hash", features: int = 64, hidden: int = 64, epochs: int = 10,
                backend: str | None = None, seed: int = 0, min_time: float = 0.0) -> BenchRow:
    """Median wall time of one training epoch (forward, loss, backward).

    Runs one untimed warm-up epoch, then at least ``epochs`` timed epochs and
    keeps going until ``min_time`` seconds have been timed. The median keeps
    scheduler and allocator hiccups out of small-``n`` timings."""
    previous = kernels.active_name()
    if backend is not None:
        kernels.set_backend(backend)
    try:
        g = bench_graph(n, features, seed)
        model = DemoNet(ModelConfig(variant=variant, hidden=hidden, num_classes=2), features,
                        build_degree_index(g), seed=seed)
        params = model.param_list()
        train = np.arange(n)
        rng = np.random.default_rng(seed)
        shapes = model.dropout_shapes(n)

        def epoch():
            masks = sample_dropout_masks(rng, shapes, 0.6, model.dtype)
            with ad.Tape() as tape:
                loss = loss_with_l2(model.forward(g, masks), g.node_labels, train, params, 5e-4)
            tape.gradient(loss, params)

        epoch()
        times = []
        while len(times) < epochs or sum(times) < min_time:
            t0 = time.perf_counter()
            epoch()
            times.append(time.perf_counter() - t0)
        return BenchRow(n, g.num_edges, 1000 * float(np.median(times)), kernels.active_name(), variant)
    finally:
        kernels.set_backend(previous)


def loglog_slope(ns, ms) -> float | None:
    """Least-squares slope of log(ms) against log(n); ``None`` below two sizes."""
    if len(ns) < 2:
        return None
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(ms, float)), 1)[0])


def write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "edges", "ms_per_epoch", "backend", "variant"])
        for r in rows:
            w.writerow([r.n, r.edges, f"{r.ms_per_epoch:.4f}", r.backend, r.variant])
