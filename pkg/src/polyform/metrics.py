"""Support-weighted classification metrics and message counting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .featurizer import enumerate_all
from .hetgraph import HeteroVisibilityGraph
from .sampler import SampledGraph, reduced_graph, sample_spanning_tree


@dataclass
class EvalReport:
    acc: float
    weighted_precision: float
    weighted_f1: float
    weighted_auc: float
    confusion: np.ndarray
    auc_defined: bool = True

    def as_dict(self) -> dict:
        return {"acc": self.acc, "weighted_precision": self.weighted_precision,
                "weighted_f1": self.weighted_f1, "weighted_auc": self.weighted_auc}


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def confusion_matrix(pred, labels, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(pred)), 1)
    return cm


def ovr_auc(scores, positive) -> float:
    """Rank-based AUC with midranks for tied scores."""
    positive = np.asarray(positive, dtype=bool)
    n_pos = positive.sum()
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def evaluate(logits, labels) -> EvalReport:
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if len(logits) != len(labels):
        raise ValueError("logits and labels differ in length")
    if len(labels) == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    k = logits.shape[1]
    pred = logits.argmax(axis=1)
    cm = confusion_matrix(pred, labels, k)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    tp = np.diag(cm)
    weights = support / support.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 0.0)
        recall = np.where(support > 0, tp / np.maximum(support, 1), 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)

    present = np.flatnonzero(support)
    auc_defined = len(present) >= 2
    if auc_defined:
        probs = softmax(logits)
        aucs = np.array([ovr_auc(probs[:, c], labels == c) for c in present])
        weighted_auc = float((aucs * weights[present]).sum())
    else:
        weighted_auc = math.nan
    return EvalReport(
        acc=float(tp.sum() / len(labels)),
        weighted_precision=float((precision * weights).sum()),
        weighted_f1=float((f1 * weights).sum()),
        weighted_auc=weighted_auc,
        confusion=cm,
        auc_defined=auc_defined,
    )


@dataclass
class MessageCounts:
    one_hop: int
    two_hop_full: int
    two_hop_reduced: int

    def __add__(self, other: "MessageCounts") -> "MessageCounts":
        return MessageCounts(self.one_hop + other.one_hop, self.two_hop_full + other.two_hop_full,
                             self.two_hop_reduced + other.two_hop_reduced)


def count_two_hop(g: HeteroVisibilityGraph) -> int:
    return len(enumerate_all(g)[0])


def count_messages(g: HeteroVisibilityGraph, reduced: SampledGraph | None = None,
                   seed: int = 0) -> MessageCounts:
    """One-hop messages are directed edge traversals (cross edges count twice).

    Without ``reduced`` the spanning-tree reduction is drawn with ``seed``.
    """
    if reduced is None:
        reduced = sample_spanning_tree(g, seed)
    one_hop = len(g.inner_edges) + 2 * len(g.cross_edges)
    return MessageCounts(one_hop, count_two_hop(g), count_two_hop(reduced_graph(reduced)))
