"""scikit-learn compatible wrappers around the graph pipeline and the GNN."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted

from .geometry import Multipolygon
from .hetgraph import HeteroVisibilityGraph, build_graph
from .io import multipolygon_from_dict, parse_multipolygon
from .metrics import softmax
from .nn.model import MultipolygonGNN, embed, collate
from .nn.training import TrainConfig, eval_paths, graph_paths, predict_logits, train
from .sampler import reduced_graph, sample_spanning_tree


def check_multipolygons(X) -> list:
    """Coerce WKT/JSON strings and dicts to Multipolygon; graphs pass through."""
    if isinstance(X, (str, Multipolygon, HeteroVisibilityGraph)):
        raise TypeError("expected a sequence of multipolygons, got a single item")
    out = []
    for k, x in enumerate(X):
        if isinstance(x, (Multipolygon, HeteroVisibilityGraph)):
            out.append(x)
        elif isinstance(x, str):
            out.append(parse_multipolygon(x))
        elif isinstance(x, dict):
            out.append(multipolygon_from_dict(x))
        else:
            raise TypeError(f"item {k}: cannot interpret {type(x).__name__} as a multipolygon")
    if not out:
        raise ValueError("empty input")
    return out


def _as_graphs(X) -> list[HeteroVisibilityGraph]:
    return [x if isinstance(x, HeteroVisibilityGraph) else build_graph(x)
            for x in check_multipolygons(X)]


class VisibilityGraphTransformer(TransformerMixin, BaseEstimator):
    """Multipolygons to heterogeneous visibility graphs, optionally reduced
    to a spanning tree of cross edges drawn with ``sample_seed``."""

    def __init__(self, sample_seed=None):
        self.sample_seed = sample_seed

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        graphs = _as_graphs(X)
        if self.sample_seed is None:
            return graphs
        return [reduced_graph(sample_spanning_tree(g, self.sample_seed)) for g in graphs]


class TwoHopFeaturizer(TransformerMixin, BaseEstimator):
    def __init__(self, sample_seed=None):
        self.sample_seed = sample_seed

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [graph_paths(g, self.sample_seed) for g in _as_graphs(X)]


class PolygonGNNClassifier(ClassifierMixin, BaseEstimator):
    """Multipolygon classifier built on two-hop heterogeneous message passing.

    ``X`` is a sequence of :class:`Multipolygon`, WKT/JSON strings or
    prebuilt visibility graphs. When ``sample`` is set, cross edges are
    resampled to a spanning tree every epoch and prediction uses the fixed
    ``sample_seed`` reduction.
    """

    def __init__(self, hidden=64, n_layers=4, lr=1e-3, batch_size=64, max_epochs=200,
                 sample=True, sample_seed=0, random_state=0, lr_factor=0.5, lr_patience=10,
                 early_stop_patience=30, validation_fraction=0.2, psi_depth=4, head_depth=4):
        self.hidden = hidden
        self.n_layers = n_layers
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.sample = sample
        self.sample_seed = sample_seed
        self.random_state = random_state
        self.lr_factor = lr_factor
        self.lr_patience = lr_patience
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.psi_depth = psi_depth
        self.head_depth = head_depth

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, max_epochs=self.max_epochs,
                           lr_factor=self.lr_factor, lr_patience=self.lr_patience,
                           early_stop_patience=self.early_stop_patience, sample=self.sample,
                           sample_seed=self.sample_seed, seed=self.random_state)

    def fit(self, X, y, eval_set=None):
        """Fit on ``(X, y)``; ``eval_set=(X_val, y_val)`` drives early
        stopping, otherwise ``validation_fraction`` of the data is held out."""
        graphs = _as_graphs(X)
        y = np.asarray(y)
        check_classification_targets(y)
        if len(graphs) != len(y):
            raise ValueError(f"X has {len(graphs)} items but y has {len(y)}")
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        y_enc = self._encoder.transform(y)
        if eval_set is None:
            idx = np.arange(len(graphs))
            tr, va = train_test_split(idx, test_size=self.validation_fraction,
                                      random_state=self.random_state, stratify=y_enc)
            g_val, y_val = [graphs[i] for i in va], y_enc[va]
            graphs, y_enc = [graphs[i] for i in tr], y_enc[tr]
        else:
            g_val = _as_graphs(eval_set[0])
            y_val = self._encoder.transform(np.asarray(eval_set[1]))
        self.model_ = MultipolygonGNN(hidden=self.hidden, n_layers=self.n_layers,
                                      num_classes=len(self.classes_), psi_depth=self.psi_depth,
                                      head_depth=self.head_depth, seed=self.random_state)
        self.report_ = train(self.model_, graphs, y_enc, g_val, y_val, self._train_config())
        return self

    def _paths(self, X):
        return eval_paths(_as_graphs(X), self._train_config())

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return predict_logits(self.model_, self._paths(X))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]

    def embed(self, X):
        """Graph-level readout vectors (concatenated per-layer node sums)."""
        check_is_fitted(self, "model_")
        return embed(self.model_, collate(self._paths(X)))
