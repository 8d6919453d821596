"""Randomised property suite behind ``demonet verify``.

Every group draws its own instances from a seed and returns a
:class:`GroupResult`; failing instances are kept in a JSON-ready form so a
run can be replayed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import autodiff as ad
from . import hashing, wl
from .graph import Graph, build_degree_index
from .model import DemoNet, ModelConfig, sample_dropout_masks
from .synth import gnm
from .training import loss_with_l2

GROUPS = (
    "lemma43",
    "hash_unbiased",
    "kernel_oracle",
    "rkhs_identity",
    "subtree_injectivity",
    "gradient_check",
)


@dataclass
class GroupResult:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.failures

    def fail(self, **instance) -> None:
        self.failures.append(_jsonable(instance))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def _graph_record(g: Graph) -> dict:
    return {"n": g.n, "edges": g.edges(), "attributes": g.attributes}


def random_graph(rng: np.random.Generator, n_max: int = 12, attr_dim: int = 3) -> Graph:
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(0, n * (n - 1) // 2 + 1))
    g = gnm(n, m, seed=int(rng.integers(2**31)))
    return g.replace(attributes=rng.standard_normal((n, attr_dim)))


def random_model(variant: str, graph_or_set, in_dim: int, rng, layers: int = 2, hidden: int = 8,
                 task: str = "node", num_classes: int = 3) -> DemoNet:
    cfg = ModelConfig(variant=variant, layers=layers, hidden=hidden, num_classes=num_classes, task=task,
                      hash_seed=int(rng.integers(2**31)), dtype="float64")
    return DemoNet(cfg, in_dim, build_degree_index(graph_or_set), seed=int(rng.integers(2**31)))


def _shuffled_rows(g: Graph, rng) -> Graph:
    """Same graph with every CSR row permuted, passed to the raw constructor."""
    nb = g.csr_neighbors.copy()
    for v in range(g.n):
        a, b = g.csr_offsets[v], g.csr_offsets[v + 1]
        nb[a:b] = rng.permutation(nb[a:b])
    return Graph(g.n, g.csr_offsets, nb, attributes=g.attributes)


def _layer1(model: DemoNet, g: Graph) -> np.ndarray:
    with ad.no_tape():
        return model.layer_outputs(g)[1].value


# ---------------------------------------------------------------------------


def check_lemma43(seed: int = 0, instances: int = 100, mutate: str | None = None) -> GroupResult:
    """Order-free, seed-oriented and degree-aware aggregation, both variants."""
    res = GroupResult("lemma43")
    rng = np.random.default_rng([seed, 43])
    counts = {"order_free": 0, "seed_oriented": 0, "degree_aware": 0}
    for t in range(instances):
        variant = ("weight", "hash")[t % 2]

        # order-free: the same graph supplied with shuffled edges / rows
        g = random_graph(rng)
        model = random_model(variant, g, g.attr_dim, rng, hidden=64)
        e = g.edges()
        flip = rng.random(len(e)) < 0.5
        e = np.where(flip[:, None], e[:, ::-1], e)[rng.permutation(len(e))]
        other = Graph.from_edges(g.n, e, attributes=g.attributes)
        if mutate == "order":
            other = _shuffled_rows(other, rng)
        with ad.no_tape():
            a = [h.value for h in model.layer_outputs(g)]
            b = [h.value for h in model.layer_outputs(other)]
        if not all(np.array_equal(x, y) for x, y in zip(a, b)):
            res.fail(property="order_free", variant=variant, graph=_graph_record(g))
        counts["order_free"] += 1

        # seed-oriented: u=0 and v=1 share the neighbourhood {2..k+1}, attributes differ
        k = int(rng.integers(1, 5))
        x = rng.standard_normal((k + 2, 3))
        star = Graph.from_edges(k + 2, [(c, j) for c in (0, 1) for j in range(2, k + 2)], attributes=x)
        model = random_model(variant, star, 3, rng, hidden=64)
        h = _layer1(model, star)
        half = model.config.hidden // 2
        diff = float(np.linalg.norm(h[0, :half] - h[1, :half]))
        if not diff > 1e-6:
            res.fail(property="seed_oriented", variant=variant, graph=_graph_record(star), diff=diff)
        counts["seed_oriented"] += 1

        # degree-aware: same own attribute and neighbour attribute, degree k vs k+1
        a_self, a_nb = rng.standard_normal(3), rng.standard_normal(3)
        n = 2 + k + (k + 1)
        edges = [(0, 2 + j) for j in range(k)] + [(1, 2 + k + j) for j in range(k + 1)]
        xs = np.vstack([a_self, a_self] + [a_nb] * (k + k + 1))
        two = Graph.from_edges(n, edges, attributes=xs)
        model = random_model(variant, two, 3, rng, hidden=64)
        h = _layer1(model, two)
        diff = float(np.linalg.norm(h[0, half:] - h[1, half:]))
        if not diff > 1e-6:
            res.fail(property="degree_aware", variant=variant, graph=_graph_record(two), diff=diff)
        counts["degree_aware"] += 1
    res.checked = sum(counts.values())
    res.info = counts
    return res


def check_hash_unbiased(seed: int = 0, pairs: int = 20, specs: int = 10_000, dim: int = 16, m: int = 8,
                        break_hash: bool = False) -> GroupResult:
    """Monte-Carlo mean of the hash kernel within 3 standard errors of the
    exact inner product. ``break_hash`` hashes ``x'`` with unrelated signs."""
    res = GroupResult("hash_unbiased")
    rng = np.random.default_rng([seed, 9])
    worst = 0.0
    for _ in range(pairs):
        x, x2 = rng.standard_normal(dim), rng.standard_normal(dim)
        s1 = rng.integers(0, 2**63, size=specs, dtype=np.uint64)
        s2 = rng.integers(0, 2**63, size=specs, dtype=np.uint64)
        other = rng.integers(0, 2**63, size=specs, dtype=np.uint64) if break_hash else None
        vals = hashing.hash_kernel_samples(x, x2, m, s1, s2, other)
        se = vals.std(ddof=1) / np.sqrt(specs)
        z = abs(vals.mean() - x @ x2) / se
        worst = max(worst, float(z))
        res.checked += 1
        if not z < 3:
            res.fail(x=x, x2=x2, m=m, mean=float(vals.mean()), exact=float(x @ x2), z=float(z))
    res.info = {"max_z": worst}
    return res


def brute_dwl(h1, d1, h2, d2) -> float:
    return float(sum(h1[a] @ h2[b] for a in range(len(h1)) for b in range(len(h2)) if d1[a] == d2[b]))


def brute_mwl(h1, h2) -> float:
    return float(sum(h1[a] @ h2[b] for a in range(len(h1)) for b in range(len(h2))))


def brute_wl(c1, c2) -> float:
    return float(sum(1 for a in c1 for b in c2 if a == b))


def check_kernel_oracle(seed: int = 0, pairs: int = 50, gram_size: int = 10, tol: float = 1e-10) -> GroupResult:
    """Factored kernels against brute-force double sums, plus Gram PSD checks."""
    res = GroupResult("kernel_oracle")
    rng = np.random.default_rng([seed, 13])
    worst = 0.0
    for _ in range(pairs):
        g1, g2 = random_graph(rng), random_graph(rng)
        labels = [rng.integers(0, 3, size=(g.n, 1)).astype(float) for g in (g1, g2)]
        cols = wl.wl_colorings([g1.replace(attributes=labels[0]), g2.replace(attributes=labels[1])], 2)
        checks = [
            ("dwl", wl.dwl_kernel(g1.attributes, g1.degrees, g2.attributes, g2.degrees),
             brute_dwl(g1.attributes, g1.degrees, g2.attributes, g2.degrees)),
            ("mwl", wl.mwl_kernel(g1.attributes, g2.attributes), brute_mwl(g1.attributes, g2.attributes)),
        ]
        for r in range(3):
            c1, c2 = cols[0][r].colors, cols[1][r].colors
            checks.append((f"wl_subtree_r{r}", wl.wl_subtree_kernel(c1, c2), brute_wl(c1, c2)))
        for name, fast, slow in checks:
            err = abs(fast - slow)
            worst = max(worst, err)
            res.checked += 1
            if not err < tol:
                res.fail(kernel=name, g1=_graph_record(g1), g2=_graph_record(g2), fast=fast, brute=slow)
    graphs = [random_graph(rng) for _ in range(gram_size)]
    labelled = [g.replace(attributes=rng.integers(0, 3, size=(g.n, 1)).astype(float)) for g in graphs]
    eig = {}
    for kind, gs in (("dwl", graphs), ("mwl", graphs), ("wl_subtree", labelled)):
        gm = wl.gram_matrix(gs, kind)
        eig[kind] = gm.min_eigenvalue()
        res.checked += 1
        if not (np.allclose(gm.values, gm.values.T) and eig[kind] > -1e-8):
            res.fail(gram=kind, min_eigenvalue=eig[kind], graphs=[_graph_record(g) for g in gs])
    res.info = {"max_abs_error": worst, "min_eigenvalues": eig}
    return res


def check_rkhs_identity(seed: int = 0, graphs: int = 20, n_max: int = 10, strict: bool = False,
                        tol: float = 1e-6) -> GroupResult:
    """Pooled coordinates against the degree-sliced kernel with a reference graph.

    The slot sum taken before the nonlinearity must equal ``K_DWL`` exactly;
    that identity is what is checked by default. ``strict`` instead requires the
    pooled (post-ReLU) coordinate to equal ``relu(K_DWL)``, which only holds
    when every node's pre-activation in the slot has the same sign.
    """
    res = GroupResult("rkhs_identity")
    rng = np.random.default_rng([seed, 45])
    post_mismatch, post_worst, pre_worst = 0, 0.0, 0.0
    for _ in range(graphs):
        g = random_graph(rng, n_max)
        cfg = ModelConfig(variant="weight", layers=2, hidden=8, task="graph", dtype="float64")
        model = DemoNet(cfg, g.attr_dim, build_degree_index(g), seed=int(rng.integers(2**31)))
        for k in range(1, cfg.layers + 1):
            for i in range(model.degree_index.num_tasks):
                for j in range(cfg.hidden):
                    c = wl.rkhs_identity_check(model, g, k, i, j)
                    res.checked += 1
                    pre_err = abs(c.preactivation_sum - c.kernel_value)
                    pre_worst = max(pre_worst, pre_err)
                    post_worst = max(post_worst, c.abs_error)
                    post_mismatch += c.abs_error >= tol
                    bad = c.abs_error >= tol if strict else pre_err >= tol
                    if bad and len(res.failures) < 20:
                        res.fail(graph=_graph_record(g), model_seed=model.seed, k=k, i=i, j=j,
                                 lhs=c.lhs, rhs=c.rhs, kernel_value=c.kernel_value,
                                 preactivation_sum=c.preactivation_sum)
                    elif bad:
                        res.failures.append({"truncated": True})
    res.info = {
        "mode": "strict" if strict else "preactivation",
        "max_preactivation_error": pre_worst,
        "max_pooled_error": post_worst,
        "pooled_mismatches": int(post_mismatch),
    }
    return res


def check_subtree_injectivity(alphabet: int = 3, max_degree: int = 4) -> GroupResult:
    """Exhaustive depth-1 subtrees: codes equal iff seed and neighbour multiset
    agree, and the map to N^2 is injective."""
    res = GroupResult("subtree_injectivity")
    attr_ids = {(float(a),): a for a in range(alphabet)}
    by_code, by_nat = {}, {}
    collisions = splits = 0
    for seed_attr in range(alphabet):
        for d in range(max_degree + 1):
            for nbrs in product(range(alphabet), repeat=d):
                x = np.array([[seed_attr]] + [[a] for a in nbrs], dtype=float)
                star = Graph.from_edges(d + 1, [(0, j) for j in range(1, d + 1)], attributes=x)
                code = wl.subtree_code(star, 0, attr_ids)
                structure = (seed_attr, tuple(sorted(nbrs)))
                prev = by_code.setdefault(code, structure)
                if prev != structure:
                    collisions += 1
                    res.fail(kind="collision", code=str(code), a=prev, b=structure)
                nat = wl.subtree_to_naturals(code, max_degree)
                prev_code = by_nat.setdefault(nat, code)
                if prev_code != code:
                    collisions += 1
                    res.fail(kind="naturals_collision", naturals=nat, a=str(prev_code), b=str(code))
                res.checked += 1
    # false splits: one structure must map to exactly one code
    per_structure = {}
    for code, structure in by_code.items():
        per_structure.setdefault(structure, set()).add(code)
    for structure, codes in per_structure.items():
        if len(codes) > 1:
            splits += 1
            res.fail(kind="false_split", structure=structure, codes=[str(c) for c in codes])
    res.info = {"subtrees": res.checked, "distinct_codes": len(by_code), "collisions": collisions,
                "false_splits": splits}
    return res


def training_loss_closure(model: DemoNet, data, labels, train_idx, dropout_p: float, lam: float, rng):
    """Full training loss with one frozen set of dropout masks."""
    n = data.n if isinstance(data, Graph) else data.graph.n
    masks = sample_dropout_masks(rng, model.dropout_shapes(n), dropout_p, model.dtype)
    params = model.param_list()
    return lambda: loss_with_l2(model.forward(data, masks), labels, train_idx, params, lam)


def check_gradients(seed: int = 0, n: int = 12, tol: float = 1e-4) -> GroupResult:
    """Finite differences on the full node-task training loss (f64, dropout frozen)."""
    res = GroupResult("gradient_check")
    rng = np.random.default_rng([seed, 7])
    errors = {}
    for variant in ("weight", "hash"):
        g = gnm(n, 20, seed=int(rng.integers(2**31)))
        g = g.replace(attributes=rng.standard_normal((n, 4)), node_labels=rng.integers(0, 3, n))
        model = random_model(variant, g, 4, rng, hidden=8)
        f = training_loss_closure(model, g, g.node_labels, np.arange(n // 2), 0.6, 5e-4, rng)
        err = ad.finite_diff_check(f, model.param_list(), eps=1e-6, max_coords=10_000, seed=seed)
        errors[variant] = err
        res.checked += 1
        if not err < tol:
            res.fail(variant=variant, graph=_graph_record(g), model_seed=model.seed, rel_error=err)
    res.info = {"max_rel_error": errors}
    return res


def run_all(seed: int = 0, mutate: str | None = None, break_hash: bool = False,
            strict_rkhs: bool = False) -> list:
    return [
        check_lemma43(seed, mutate=mutate),
        check_hash_unbiased(seed, break_hash=break_hash),
        check_kernel_oracle(seed),
        check_rkhs_identity(seed, strict=strict_rkhs),
        check_subtree_injectivity(),
        check_gradients(seed),
    ]
