"""``demonet`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import bench, kernels, verify, wl
from .graph import GraphError, SplitSpec, build_degree_index, make_features, split_random
from .io import (
    load_edge_list,
    load_graph_dataset,
    load_node_table,
    write_edge_list,
    write_graph_dataset,
    write_id_map,
    write_node_table,
)
from .model import VARIANTS, DemoNet, ModelConfig
from .synth import DEFAULT_DEGREE_CLASSES, degree_classes, degree_mix_set
from .training import TrainConfig, fit, summarize

log = logging.getLogger("demonet")

NODE_SYNTH = ("degree-classes",)
GRAPH_SYNTH = ("degree-mix",)


class UsageError(Exception):
    """Bad invocation; reported with exit code 2."""


@dataclass
class RunConfig:
    command: str = "train-node"
    data: str | None = None
    synth: str | None = None
    labels: str | None = None
    attributes: str | None = None
    variant: str = "weight"
    layers: int = 2
    hidden: int = 64
    lr: float = 0.005
    dropout: float = 0.6
    l2: float = 0.0005
    patience: int = 100
    max_epochs: int = 1000
    repeats: int | None = None
    seed: int = 0
    hash_dim: int | None = None
    bucketing: bool = False
    pooling: str = "degree"
    stratify: bool | None = None
    out: str | None = None

    def resolved_repeats(self) -> int:
        if self.repeats is not None:
            return self.repeats
        return 10 if self.command == "train-graph" else 1


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, value):
    """Convert a config-file string to the field's type."""
    if not isinstance(value, str):
        return value
    ftype = str(_FIELDS[key].type)
    if value.lower() in ("none", "null", ""):
        return None
    if "bool" in ftype:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {key!r}: expected a boolean, got {value!r}")
    try:
        if "int" in ftype:
            return int(value)
        if "float" in ftype:
            return float(value)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {value!r}") from None
    return value


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines or a JSON object, detected from the first
    non-blank character. Dashes in keys are read as underscores."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip()
    out = {}
    for k, v in raw.items():
        key = k.replace("-", "_")
        if key not in _FIELDS:
            raise UsageError(f"{path}: unknown config key {k!r}")
        out[key] = _coerce(key, v)
    return out


def build_run_config(command: str, args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicitly given flags."""
    values = {"command": command}
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
        if file_values.get("command", command) != command:
            raise UsageError(f"config was written for {file_values['command']!r}, not {command!r}")
        values.update(file_values)
    for key in _FIELDS:
        v = getattr(args, key, None)
        if v is not None and key != "command":
            values[key] = v
    cfg = RunConfig(**values)
    if cfg.data and cfg.synth:
        raise UsageError("give either --data or --synth, not both")
    if not cfg.data and not cfg.synth:
        raise UsageError("one of --data or --synth is required")
    if cfg.variant not in VARIANTS:
        raise UsageError(f"--variant must be one of {VARIANTS}")
    allowed = NODE_SYNTH if command == "train-node" else GRAPH_SYNTH
    if cfg.synth and cfg.synth not in allowed:
        raise UsageError(f"--synth for {command} must be one of {allowed}")
    if command == "train-node" and cfg.pooling != "degree":
        raise UsageError("--pooling applies to train-graph only")
    if cfg.resolved_repeats() < 1:
        raise UsageError("--repeats must be >= 1")
    return cfg


def split_seeds(seed: int, repeat: int) -> dict:
    """Independent data / init / dropout / hash seeds for one repeat."""
    children = np.random.SeedSequence([seed, repeat]).spawn(4)
    vals = [int(c.generate_state(1)[0]) for c in children]
    return dict(zip(("data", "init", "dropout", "hash"), vals))


def _train_config(cfg: RunConfig, seed: int) -> TrainConfig:
    return TrainConfig(lr=cfg.lr, dropout_p=cfg.dropout, l2_lambda=cfg.l2, patience=cfg.patience,
                       hidden=cfg.hidden, max_epochs=cfg.max_epochs, seed=seed)


def _model_config(cfg: RunConfig, task: str, num_classes: int, hash_seed: int) -> ModelConfig:
    return ModelConfig(variant=cfg.variant, layers=cfg.layers, hidden=cfg.hidden, num_classes=num_classes,
                       task=task, pooling=cfg.pooling, hash_dim=cfg.hash_dim, hash_seed=hash_seed)


def _load_node_graph(cfg: RunConfig, data_seed: int):
    if cfg.synth:
        return degree_classes(DEFAULT_DEGREE_CLASSES, seed=data_seed)
    if not cfg.labels:
        raise UsageError("train-node --data needs --labels")
    g = load_edge_list(cfg.data)
    g = load_node_table(cfg.labels, g, "labels")
    if cfg.attributes:
        return load_node_table(cfg.attributes, g, "attributes")
    return make_features(g, "one_hot_degree", build_degree_index(g, bucketing=cfg.bucketing))


def _write_outputs(out: Path, cfg: RunConfig, runs, models, extra=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(json.dumps(asdict(cfg), indent=2))
    summary = summarize(runs)
    metrics = {"runs": [r.to_json() for r in runs], "summary": summary, "std_kind": "population"}
    if extra:
        metrics.update(extra)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    for r, model in enumerate(models):
        model.save(out / "checkpoints" / f"run{r}")
    lines = [f"{'run':>4} {'seed':>11} {'epochs':>6} {'best':>5} {'train':>7} {'val':>7} {'test':>7} {'ms/ep':>8}"]
    for i, r in enumerate(runs):
        lines.append(f"{i:>4} {r.seed:>11} {r.epochs_run:>6} {r.best_epoch:>5} {r.train_acc:>7.4f} "
                     f"{r.val_acc:>7.4f} {r.test_acc:>7.4f} {r.wall_ms_per_epoch:>8.2f}")
    lines.append(f"test accuracy: {summary['test_acc_mean']:.4f} ± {summary['test_acc_std']:.4f} "
                 f"(mean ± std over {len(runs)} runs)")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return metrics


def cmd_train_node(cfg: RunConfig) -> int:
    runs, models = [], []
    for r in range(cfg.resolved_repeats()):
        seeds = split_seeds(cfg.seed, r)
        g = _load_node_graph(cfg, seeds["data"])
        labels = g.node_labels
        labeled = np.flatnonzero(labels >= 0)
        stratify = cfg.synth is not None if cfg.stratify is None else cfg.stratify
        sp = split_random(len(labeled), (0.1, 0.2, 0.7), seed=seeds["data"],
                          stratify_by=labels[labeled] if stratify else None)
        sp = SplitSpec(labeled[sp.train], labeled[sp.val], labeled[sp.test], sp.seed)
        index = build_degree_index(g, bucketing=cfg.bucketing)
        num_classes = int(labels.max()) + 1
        model = DemoNet(_model_config(cfg, "node", num_classes, seeds["hash"]), g.attr_dim, index,
                        seed=seeds["init"])
        runs.append(fit(model, g, sp, _train_config(cfg, seeds["dropout"])))
        models.append(model)
    out = Path(cfg.out or "runs/train-node")
    _write_outputs(out, cfg, runs, models)
    if cfg.data:
        write_id_map(out / "id_map.csv", g.meta["external_ids"])
    return 0


def cmd_train_graph(cfg: RunConfig) -> int:
    runs, models = [], []
    loaded = load_graph_dataset(cfg.data) if cfg.data else None
    for r in range(cfg.resolved_repeats()):
        seeds = split_seeds(cfg.seed, r)
        gs = loaded if loaded is not None else degree_mix_set(seed=seeds["data"])
        stratify = bool(cfg.stratify)
        sp = split_random(len(gs), (1 / 3, 1 / 3, 1 / 3), seed=seeds["data"],
                          stratify_by=gs.graph_labels if stratify else None)
        index = build_degree_index(gs, bucketing=cfg.bucketing, indices=sp.train)
        num_classes = int(gs.graph_labels.max()) + 1
        model = DemoNet(_model_config(cfg, "graph", num_classes, seeds["hash"]), gs.attr_dim, index,
                        seed=seeds["init"])
        runs.append(fit(model, gs, sp, _train_config(cfg, seeds["dropout"])))
        models.append(model)
    _write_outputs(Path(cfg.out or "runs/train-graph"), cfg, runs, models)
    return 0


def cmd_wl(args) -> int:
    if args.data:
        gs = load_graph_dataset(args.data)
        a, b = args.pair
        g1, g2 = gs[a], gs[b]
    else:
        if len(args.graphs) != 2:
            raise UsageError("wl needs two edge-list files or --data DIR --pair I J")
        g1, g2 = (load_edge_list(p) for p in args.graphs)
    verdict = wl.wl_test(g1, g2, args.rounds)
    print(verdict)
    return 0


def cmd_kernel(args) -> int:
    if bool(args.data) == bool(args.synth):
        raise UsageError("kernel needs exactly one of --data or --synth")
    gs = load_graph_dataset(args.data) if args.data else degree_mix_set(args.num_graphs, seed=args.seed)
    gm = wl.gram_matrix(gs.graphs, args.kind, rounds=args.rounds)
    out = Path(args.out or f"gram_{args.kind}.csv")
    gm.to_csv(out)
    print(f"{args.kind} Gram {gm.values.shape[0]}x{gm.values.shape[1]} -> {out}; "
          f"min eigenvalue {gm.min_eigenvalue():.3e}; psd={gm.is_psd()}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out or f"synth-{args.kind}")
    if args.kind == "degree-classes":
        g = degree_classes(DEFAULT_DEGREE_CLASSES, seed=args.seed)
        out.mkdir(parents=True, exist_ok=True)
        write_edge_list(out / "edges.txt", g)
        write_node_table(out / "labels.csv", g, "labels")
        write_node_table(out / "attributes.csv", g, "attributes")
        print(f"{g.n} nodes, {g.num_edges} edges -> {out}")
    else:
        gs = degree_mix_set(args.num_graphs, seed=args.seed)
        write_graph_dataset(gs, out, "DEGMIX")
        print(f"{len(gs)} graphs -> {out}")
    return 0


def cmd_verify(args) -> int:
    results = verify.run_all(args.seed, mutate=args.mutate, break_hash=args.break_hash,
                             strict_rkhs=args.strict_rkhs)
    report = {"seed": args.seed, "mutate": args.mutate, "break_hash": args.break_hash, "groups": []}
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:<20} checked={r.checked:<5} failures={len(r.failures):<3} {json.dumps(r.info)}")
        report["groups"].append({"name": r.name, "passed": r.passed, "checked": r.checked, "info": r.info,
                                 "failures": r.failures})
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} property groups passed")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
    if not ok:
        first = next(r for r in results if not r.passed)
        print("failing instance: " + json.dumps(first.failures[:1]), file=sys.stderr)
    return 0 if ok else 1


def cmd_bench(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    backends = kernels.available() if args.backend == "both" else [args.backend]
    rows = []
    for be in backends:
        for n in sizes:
            row = bench.time_epochs(n, args.variant, args.features, args.hidden, args.epochs,
                                    backend=be, seed=args.seed, min_time=args.min_time)
            rows.append(row)
            print(f"{row.backend:<7} n={row.n:<7} edges={row.edges:<7} {row.ms_per_epoch:9.2f} ms/epoch")
    out = Path(args.out or "bench.csv")
    bench.write_csv(out, rows)
    for be in sorted({r.backend for r in rows}):
        mine = [r for r in rows if r.backend == be]
        slope = bench.loglog_slope([r.n for r in mine], [r.ms_per_epoch for r in mine])
        if slope is not None:
            print(f"{be}: log-log slope {slope:.3f}")
    print(f"-> {out}")
    return 0


# ---------------------------------------------------------------------------


def _train_parser(sub, name: str, help_text: str):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", help="key=value or JSON file; flags override it")
    p.add_argument("--data", help="edge list (train-node) or indicator-format directory (train-graph)")
    p.add_argument("--synth", help="|".join(NODE_SYNTH if name == "train-node" else GRAPH_SYNTH))
    p.add_argument("--labels", help="node label CSV (train-node --data)")
    p.add_argument("--attributes", help="node attribute CSV (train-node --data)")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--hash-dim", type=int)
    p.add_argument("--bucketing", action="store_true", default=None)
    p.add_argument("--stratify", action=argparse.BooleanOptionalAction, default=None)
    if name == "train-graph":
        p.add_argument("--pooling", choices=("degree", "mean"))
    p.add_argument("--out")
    return p


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="demonet", description="Degree-specific graph neural networks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _train_parser(sub, "train-node", "node classification")
    _train_parser(sub, "train-graph", "graph classification")

    p = sub.add_parser("wl", help="1-WL isomorphism test")
    p.add_argument("graphs", nargs="*", help="two edge-list files")
    p.add_argument("--data", help="indicator-format directory")
    p.add_argument("--pair", type=int, nargs=2, default=(0, 1), metavar=("I", "J"))
    p.add_argument("--rounds", type=int)

    p = sub.add_parser("kernel", help="Gram matrix CSV")
    p.add_argument("--data")
    p.add_argument("--synth", choices=GRAPH_SYNTH)
    p.add_argument("--num-graphs", type=int, default=20)
    p.add_argument("--kind", choices=("dwl", "mwl", "wl_subtree"), default="dwl")
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("kind", choices=NODE_SYNTH + GRAPH_SYNTH)
    p.add_argument("--num-graphs", type=int, default=90)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mutate", choices=("order",))
    p.add_argument("--break-hash", action="store_true", help="negative control: mismatched hash specs")
    p.add_argument("--strict-rkhs", action="store_true", help="require pooled == relu(kernel) coordinatewise")
    p.add_argument("--out", help="JSON report path")

    p = sub.add_parser("bench", help="per-epoch time against n")
    p.add_argument("--sizes", default="1000,2000,4000,8000")
    p.add_argument("--variant", choices=("weight", "hash"), default="hash")
    p.add_argument("--features", type=int, default=64)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--epochs", type=int, default=10, help="minimum timed epochs per size")
    p.add_argument("--min-time", type=float, default=1.0, help="minimum timed seconds per size")
    p.add_argument("--backend", choices=("auto", "cython", "python", "both"), default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command in ("train-node", "train-graph"):
            cfg = build_run_config(args.command, args)
            return (cmd_train_node if args.command == "train-node" else cmd_train_graph)(cfg)
        return {"wl": cmd_wl, "kernel": cmd_kernel, "synth": cmd_synth, "verify": cmd_verify,
                "bench": cmd_bench}[args.command](args)
    except UsageError as e:
        print(f"demonet {args.command}: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, GraphError) as e:
        print(f"demonet {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
