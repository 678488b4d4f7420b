"""Two-hop heterogeneous message passing over five-tuple path features.

Node embeddings start at zero. Each layer sends one message per two-hop
path ``i <- j <- k``::

    m = w[type] * psi[type](h_i || h_j || h_k || geo(d_ij, d_jk, theta))

and a node's new embedding is the sum of the messages converging on it. The
graph representation concatenates the per-layer node sums and feeds a
classifier stack.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..featurizer import PathType, TwoHopPaths
from .dense import DenseStack

N_PATH_TYPES = len(PathType)


class ConfigurationError(ValueError):
    pass


class NumericalError(FloatingPointError):
    pass


class GnnLayer:
    def __init__(self, hidden: int, geo_dim: int, rng, psi_depth: int = 4):
        self.hidden = hidden
        self.geo = DenseStack([3, geo_dim], rng, norm=True, act=False, plain_last=False)
        width = 3 * hidden + geo_dim
        self.psi = {t: DenseStack([width] + [hidden] * psi_depth, rng) for t in PathType}
        self.w = np.ones(N_PATH_TYPES)

    def params(self):
        out = [(f"geo.{n}", a) for n, a in self.geo.params()]
        for t in PathType:
            out += [(f"psi.{t.name}.{n}", a) for n, a in self.psi[t].params()]
        out.append(("w", self.w))
        return out

    def buffers(self):
        out = [(f"geo.{n}", a) for n, a in self.geo.buffers()]
        for t in PathType:
            out += [(f"psi.{t.name}.{n}", a) for n, a in self.psi[t].buffers()]
        return out


class MultipolygonGNN:
    def __init__(self, hidden=64, n_layers=4, num_classes=2, geo_dim=None,
                 psi_depth=4, head_depth=4, seed=0):
        if hidden < 1 or n_layers < 1 or num_classes < 2:
            raise ConfigurationError("need hidden >= 1, n_layers >= 1, num_classes >= 2")
        self.hidden = hidden
        self.n_layers = n_layers
        self.num_classes = num_classes
        self.geo_dim = geo_dim or hidden
        self.psi_depth = psi_depth
        self.head_depth = head_depth
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers = [GnnLayer(hidden, self.geo_dim, rng, psi_depth) for _ in range(n_layers)]
        self.head = DenseStack([n_layers * hidden] + [hidden] * (head_depth - 1) + [num_classes], rng)

    def config(self) -> dict:
        return {"hidden": self.hidden, "n_layers": self.n_layers, "num_classes": self.num_classes,
                "geo_dim": self.geo_dim, "psi_depth": self.psi_depth,
                "head_depth": self.head_depth, "seed": self.seed}

    def params(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for l, layer in enumerate(self.layers):
            out += [(f"layers.{l}.{n}", a) for n, a in layer.params()]
        out += [(f"head.{n}", a) for n, a in self.head.params()]
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for l, layer in enumerate(self.layers):
            out += [(f"layers.{l}.{n}", a) for n, a in layer.buffers()]
        out += [(f"head.{n}", a) for n, a in self.head.buffers()]
        return out

    def state(self) -> list[np.ndarray]:
        return [a.copy() for _, a in self.params() + self.buffers()]

    def load_state(self, state) -> None:
        for (_, a), v in zip(self.params() + self.buffers(), state, strict=True):
            a[...] = v


def canonical_order(paths: TwoHopPaths) -> np.ndarray:
    """Row order keyed on tuple values, with node ids only as tie-breakers."""
    return np.lexsort((paths.tail, paths.mid, paths.type_jk, paths.type_ij,
                       paths.theta, paths.d_jk, paths.d_ij))


@dataclass(eq=False)
class GraphBatch:
    n_graphs: int
    n_nodes: int
    head: np.ndarray
    mid: np.ndarray
    tail: np.ndarray
    geo: np.ndarray
    path_type: np.ndarray
    graph_of_node: np.ndarray

    def __post_init__(self):
        p = len(self.head)
        cols = np.arange(p)
        ones = np.ones(p)

        def incidence(rows):
            return sp.csr_matrix((ones, (rows, cols)), shape=(self.n_nodes, p))

        self.to_head = incidence(self.head)
        self.to_mid = incidence(self.mid)
        self.to_tail = incidence(self.tail)
        self.pool = sp.csr_matrix((np.ones(self.n_nodes), (self.graph_of_node, np.arange(self.n_nodes))),
                                  shape=(self.n_graphs, self.n_nodes))
        self.type_rows = [np.flatnonzero(self.path_type == t) for t in range(N_PATH_TYPES)]


def collate(samples: list[TwoHopPaths]) -> GraphBatch:
    heads, mids, tails, geos, types, owners = [], [], [], [], [], []
    offset = 0
    for g, paths in enumerate(samples):
        order = canonical_order(paths)
        heads.append(paths.head[order] + offset)
        mids.append(paths.mid[order] + offset)
        tails.append(paths.tail[order] + offset)
        geos.append(paths.geo[order])
        types.append(paths.path_type[order])
        owners.append(np.full(paths.n_nodes, g))
        offset += paths.n_nodes
    cat = np.concatenate
    return GraphBatch(len(samples), offset, cat(heads), cat(mids), cat(tails),
                      cat(geos).reshape(-1, 3), cat(types), cat(owners))


def geo_embed(layer: GnnLayer, geo, training=False):
    """Geo-embedding of (d_ij, d_jk, theta) rows."""
    out, _ = layer.geo.forward(np.atleast_2d(np.asarray(geo, dtype=float)), training)
    return out


def message(layer: GnnLayer, h_i, h_j, h_k, geo, path_type, training=False):
    """Messages for rows of paths that all share ``path_type``."""
    try:
        psi = layer.psi[PathType(path_type)]
    except (KeyError, ValueError):
        raise ConfigurationError(f"no message network for path type {path_type!r}") from None
    g = geo_embed(layer, geo, training)
    x = np.concatenate([np.atleast_2d(h_i), np.atleast_2d(h_j), np.atleast_2d(h_k), g], axis=1)
    out, _ = psi.forward(x, training)
    return layer.w[int(path_type)] * out


def _layer_forward(layer: GnnLayer, batch: GraphBatch, h_prev, training):
    g, gcache = layer.geo.forward(batch.geo, training)
    x = np.concatenate([h_prev[batch.head], h_prev[batch.mid], h_prev[batch.tail], g], axis=1)
    msg = np.zeros((len(x), layer.hidden))
    psi_caches = {}
    for t in PathType:
        rows = batch.type_rows[t]
        if len(rows) == 0:
            continue
        y, c = layer.psi[t].forward(x[rows], training)
        msg[rows] = layer.w[t] * y
        psi_caches[t] = (rows, y, c)
    h = batch.to_head @ msg
    return h, (gcache, psi_caches, x.shape)


def layer_forward(layer: GnnLayer, batch: GraphBatch, h_prev, training=False):
    """Sum of messages converging on each node; empty sums give zeros."""
    return _layer_forward(layer, batch, h_prev, training)[0]


def graph_readout(states: list[np.ndarray], batch: GraphBatch) -> np.ndarray:
    """Concatenate per-layer node sums, one row per graph."""
    return np.concatenate([np.asarray(batch.pool @ h) for h in states], axis=1)


def _layer_backward(layer: GnnLayer, batch: GraphBatch, dh, cache, need_dx):
    gcache, psi_caches, xshape = cache
    H = layer.hidden
    dmsg = dh[batch.head]
    dx = np.zeros(xshape)
    psi_grads = {}
    dw = np.zeros(N_PATH_TYPES)
    for t in PathType:
        if t not in psi_caches:
            psi_grads[t] = [np.zeros_like(a) for _, a in layer.psi[t].params()]
            continue
        rows, y, c = psi_caches[t]
        dm = dmsg[rows]
        dw[t] = (dm * y).sum()
        dxt, psi_grads[t] = layer.psi[t].backward(layer.w[t] * dm, c)
        dx[rows] = dxt
    _, geo_grads = layer.geo.backward(dx[:, 3 * H:], gcache, need_dx=False)
    grads = list(geo_grads)
    for t in PathType:
        grads += psi_grads[t]
    grads.append(dw)
    dh_prev = None
    if need_dx:
        dh_prev = (batch.to_head @ dx[:, :H] + batch.to_mid @ dx[:, H:2 * H]
                   + batch.to_tail @ dx[:, 2 * H:3 * H])
    return dh_prev, grads


def forward(model: MultipolygonGNN, batch: GraphBatch, training=False, return_cache=False):
    """Class logits for every graph in ``batch``."""
    if batch.geo.shape[1:] != (3,) or model.head.in_dim != model.n_layers * model.hidden:
        raise ConfigurationError("batch or head width does not match the model")
    h = np.zeros((batch.n_nodes, model.hidden))
    states, caches = [], []
    for layer in model.layers:
        h, c = _layer_forward(layer, batch, h, training)
        states.append(h)
        caches.append(c)
    readout = graph_readout(states, batch)
    logits, head_cache = model.head.forward(readout, training)
    if return_cache:
        return logits, (caches, head_cache, states)
    return logits


def embed(model: MultipolygonGNN, batch: GraphBatch) -> np.ndarray:
    h = np.zeros((batch.n_nodes, model.hidden))
    states = []
    for layer in model.layers:
        h = layer_forward(layer, batch, h)
        states.append(h)
    return graph_readout(states, batch)


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    labels = np.asarray(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss}; logit range "
                             f"[{np.nanmin(logits):.3g}, {np.nanmax(logits):.3g}]")
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def backward(model: MultipolygonGNN, batch: GraphBatch, cache, dlogits) -> list[np.ndarray]:
    """Gradients aligned with ``model.params()``."""
    caches, head_cache, _ = cache
    H = model.hidden
    dreadout, head_grads = model.head.backward(dlogits, head_cache)
    layer_grads = [None] * model.n_layers
    dh_next = None
    pool_t = batch.pool.T.tocsr()
    for l in range(model.n_layers - 1, -1, -1):
        dh = np.asarray(pool_t @ dreadout[:, l * H:(l + 1) * H])
        if dh_next is not None:
            dh = dh + dh_next
        dh_next, layer_grads[l] = _layer_backward(model.layers[l], batch, dh, caches[l], need_dx=l > 0)
    grads = [g for lg in layer_grads for g in lg] + head_grads
    return grads


def loss_and_grads(model: MultipolygonGNN, batch: GraphBatch, labels, training=True):
    logits, cache = forward(model, batch, training=training, return_cache=True)
    loss, dlogits = cross_entropy(logits, labels)
    return loss, backward(model, batch, cache, dlogits)


def interaction_weights(model: MultipolygonGNN) -> dict:
    """Relative |w| per path type, normalised per layer, plus an aggregate."""
    per_layer = []
    for layer in model.layers:
        a = np.abs(layer.w)
        total = a.sum()
        rel = a / total if total > 0 else np.full(N_PATH_TYPES, 1.0 / N_PATH_TYPES)
        per_layer.append({t.name: float(rel[t]) for t in PathType})
    agg = np.sum([np.abs(layer.w) for layer in model.layers], axis=0)
    agg = agg / agg.sum() if agg.sum() > 0 else np.full(N_PATH_TYPES, 1.0 / N_PATH_TYPES)
    return {"per_layer": per_layer, "aggregate": {t.name: float(agg[t]) for t in PathType}}
