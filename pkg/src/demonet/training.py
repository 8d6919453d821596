"""Loss, Adam, dropout, early stopping and evaluation."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .graph import Graph, GraphSet, SplitSpec
from .model import DemoNet, merge_graphs, sample_dropout_masks


@dataclass
class TrainConfig:
    lr: float = 0.005
    dropout_p: float = 0.6
    l2_lambda: float = 0.0005
    patience: int = 100
    hidden: int = 64
    max_epochs: int = 1000
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    eps_adam: float = 1e-8

    def __post_init__(self):
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p.value) for p in params], [np.zeros_like(p.value) for p in params])


def adam_step(state: AdamState, params, grads, cfg: TrainConfig) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: params, grads and state disagree in length")
    b1, b2 = cfg.betas
    state.step += 1
    t = state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.value.shape:
            raise ad.ShapeError(f"adam_step: grad {g.shape} vs param {p.value.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p.value -= (cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)).astype(p.value.dtype)


def loss_with_l2(logits, labels, mask, params, lam: float) -> ad.Tensor:
    loss = ad.softmax_xent_loss(logits, labels, mask)
    if lam == 0:
        return loss
    reg = ad.scale(ad.add_scalars(*[ad.sum_squares(p) for p in params]), lam)
    return ad.add_scalars(loss, reg)


@dataclass
class Metrics:
    seed: int
    epochs_run: int
    best_epoch: int
    train_acc: float
    val_acc: float
    test_acc: float
    wall_ms_per_epoch: float
    loss_curve: list = field(default_factory=list)
    val_curve: list = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("loss_curve")
        d.pop("val_curve")
        return d


class EarlyStopping:
    """Tracks the best validation epoch and signals a stop after ``patience``
    epochs without improvement.

    Accuracy is the monitored score; among epochs with equal accuracy the
    lower validation loss wins (small validation sets saturate quickly).
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best = (-np.inf, -np.inf)
        self.best_epoch = 0
        self.best_state = None
        self.bad_epochs = 0

    def update(self, epoch: int, score: float, state_fn, loss: float = 0.0) -> bool:
        key = (score, -loss)
        if key > self.best:
            self.best, self.best_epoch, self.best_state = key, epoch, state_fn()
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def _targets(model: DemoNet, data):
    """(forward input, label array, row count) for either task."""
    if model.config.task == "node":
        if not isinstance(data, Graph) or data.node_labels is None:
            raise ValueError("node task needs a Graph with node labels")
        return data, data.node_labels, data.n
    if isinstance(data, GraphSet):
        if data.graph_labels is None:
            raise ValueError("graph task needs graph labels")
        return merge_graphs(data.graphs), data.graph_labels, len(data)
    raise ValueError("graph task needs a GraphSet")


def accuracy(logits: np.ndarray, labels, idx) -> float:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("cannot evaluate on an empty index set")
    pred = np.argmax(logits[idx], axis=1)  # ties go to the lowest class id
    return float(np.mean(pred == np.asarray(labels)[idx]))


def predict(model: DemoNet, data) -> np.ndarray:
    x = data
    if model.config.task == "graph" and isinstance(data, GraphSet):
        x = merge_graphs(data.graphs)
    with ad.no_tape():
        return model.forward(x).value


def evaluate(model: DemoNet, data, idx) -> float:
    x, labels, _ = _targets(model, data)
    return accuracy(predict(model, x), labels, idx)


def _check_labels(labels, idx, num_classes, what):
    y = np.asarray(labels)[idx]
    if np.any(y < 0):
        raise ValueError(f"{what} split contains unlabeled entries")
    if np.any(y >= num_classes):
        raise ValueError(f"label {int(y.max())} outside model's {num_classes} classes")


def fit(model: DemoNet, data, splits: SplitSpec, cfg: TrainConfig) -> Metrics:
    """Full-batch training with best-validation-epoch restoration."""
    x, labels, count = _targets(model, data)
    if len(splits.train) == 0:
        raise ValueError("no labeled training entries")
    _check_labels(labels, splits.train, model.config.num_classes, "train")
    if len(splits.val):
        _check_labels(labels, splits.val, model.config.num_classes, "val")
    params = model.param_list()
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD809]))
    n_nodes = x.n if isinstance(x, Graph) else x.graph.n
    shapes = model.dropout_shapes(n_nodes)
    stopper = EarlyStopping(cfg.patience)
    val_idx = splits.val if len(splits.val) else splits.train
    losses, vals = [], []
    t0 = time.perf_counter()
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        masks = sample_dropout_masks(rng, shapes, cfg.dropout_p, model.dtype)
        with ad.Tape() as tape:
            logits = model.forward(x, masks)
            loss = loss_with_l2(logits, labels, splits.train, params, cfg.l2_lambda)
        grads = tape.gradient(loss, params)
        adam_step(state, params, grads, cfg)
        losses.append(float(loss.value))
        out = predict(model, x)
        val_acc = accuracy(out, labels, val_idx)
        with ad.no_tape():
            val_loss = float(ad.softmax_xent_loss(ad.Tensor(out), labels, val_idx).value)
        vals.append(val_acc)
        if stopper.update(epoch, val_acc, model.get_state, val_loss):
            break
    wall = (time.perf_counter() - t0) * 1000 / max(epoch, 1)
    model.set_state(stopper.best_state)
    out = predict(model, x)
    return Metrics(
        seed=cfg.seed,
        epochs_run=epoch,
        best_epoch=stopper.best_epoch,
        train_acc=accuracy(out, labels, splits.train),
        val_acc=accuracy(out, labels, val_idx),
        test_acc=accuracy(out, labels, splits.test) if len(splits.test) else float("nan"),
        wall_ms_per_epoch=wall,
        loss_curve=losses,
        val_curve=vals,
    )


def summarize(runs) -> dict:
    """Mean and (population) standard deviation of each accuracy over runs."""
    out = {"runs": len(runs)}
    for key in ("train_acc", "val_acc", "test_acc"):
        vals = np.array([getattr(r, key) for r in runs], dtype=float)
        out[f"{key}_mean"] = float(vals.mean())
        out[f"{key}_std"] = float(vals.std())
    return out
