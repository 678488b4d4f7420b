"""Minibatch training with Adam, plateau LR decay and early stopping."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..featurizer import TwoHopPaths, tuple_multiset
from ..hetgraph import HeteroVisibilityGraph
from ..sampler import reduced_graph, sample_spanning_tree
from .model import MultipolygonGNN, NumericalError, collate, cross_entropy, forward, loss_and_grads
from .optim import Adam, ReduceLROnPlateau

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    eval_batch_size: int = 128
    max_epochs: int = 500
    lr_factor: float = 0.5
    lr_patience: int = 10
    early_stop_patience: int = 30
    sample: bool = True
    sample_seed: int = 0
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainReport:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_early: bool = False
    diverged: bool = False
    message: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "val_acc", "lr"])
        for r in self.history:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_acc), repr(r.lr)])
        return buf.getvalue()


def graph_paths(graph: HeteroVisibilityGraph, sample_seed: int | None) -> TwoHopPaths:
    """Tuples of the full graph, or of a spanning-tree reduction when seeded."""
    if sample_seed is None:
        return tuple_multiset(graph)
    return tuple_multiset(reduced_graph(sample_spanning_tree(graph, sample_seed)))


def eval_paths(graphs, config: TrainConfig) -> list[TwoHopPaths]:
    seed = config.sample_seed if config.sample else None
    return [graph_paths(g, seed) for g in graphs]


def predict_logits(model: MultipolygonGNN, paths: list[TwoHopPaths], batch_size=128) -> np.ndarray:
    out = [forward(model, collate(paths[s:s + batch_size]))
           for s in range(0, len(paths), batch_size)]
    if not out:
        return np.zeros((0, model.num_classes))
    return np.concatenate(out, axis=0)


def _batches(n: int, size: int, rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    chunks = [order[s:s + size] for s in range(0, n, size)]
    # a single-sample batch has no batch statistics
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate(chunks[-2:])
        chunks.pop()
    return chunks


def train(model: MultipolygonGNN, train_graphs, train_labels, val_graphs, val_labels,
          config: TrainConfig) -> TrainReport:
    """Train in place; the model ends holding the best-validation-loss state."""
    if len(train_graphs) == 0 or len(val_graphs) == 0:
        raise ValueError("training and validation sets must be nonempty")
    y_train = np.asarray(train_labels)
    y_val = np.asarray(val_labels)
    params = [a for _, a in model.params()]
    opt = Adam(params, lr=config.lr)
    sched = ReduceLROnPlateau(opt, factor=config.lr_factor, patience=config.lr_patience)
    report = TrainReport()

    full_paths = None if config.sample else [graph_paths(g, None) for g in train_graphs]
    val_paths = eval_paths(val_graphs, config)
    best_state = model.state()
    stale = 0

    for epoch in range(1, config.max_epochs + 1):
        if config.sample:
            seed = config.sample_seed + epoch
            epoch_paths = [graph_paths(g, seed) for g in train_graphs]
        else:
            epoch_paths = full_paths
        rng = np.random.default_rng([config.seed, epoch])
        last_good = model.state()
        total, count = 0.0, 0
        try:
            for idx in _batches(len(epoch_paths), config.batch_size, rng):
                batch = collate([epoch_paths[i] for i in idx])
                loss, grads = loss_and_grads(model, batch, y_train[idx])
                opt.step(grads)
                total += loss * len(idx)
                count += len(idx)
            val_logits = predict_logits(model, val_paths, config.eval_batch_size)
            val_loss, _ = cross_entropy(val_logits, y_val)
        except NumericalError as exc:
            model.load_state(last_good)
            report.diverged = True
            report.message = f"epoch {epoch}: {exc}"
            log.warning("training diverged: %s", report.message)
            break
        val_acc = float((val_logits.argmax(1) == y_val).mean())
        report.history.append(EpochRecord(epoch, total / count, val_loss, val_acc, opt.lr))
        log.debug("epoch %d train %.4f val %.4f acc %.3f", epoch, total / count, val_loss, val_acc)

        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_state = model.state()
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                report.stopped_early = True
                break
        sched.step(val_loss)

    if not report.diverged:
        model.load_state(best_state)
    return report


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
