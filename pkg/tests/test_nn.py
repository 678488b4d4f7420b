import math

import numpy as np
import pytest

from polyform.data import random_multipolygon
from polyform.featurizer import PathType, TwoHopPaths, tuple_multiset
from polyform.hetgraph import build_graph
from polyform.io import parse_multipolygon
from polyform.nn.checkpoint import dumps, load_checkpoint, loads, save_checkpoint
from polyform.nn.dense import DenseStack
from polyform.nn.model import (
    ConfigurationError,
    MultipolygonGNN,
    NumericalError,
    canonical_order,
    collate,
    cross_entropy,
    embed,
    forward,
    geo_embed,
    graph_readout,
    interaction_weights,
    layer_forward,
    loss_and_grads,
    message,
)
from polyform.nn.optim import Adam, ReduceLROnPlateau

FIXTURES = [
    '{"polygons":[{"exterior":[[0,0],[4,0],[4,4],[0,4]],"holes":[[[1,1],[1,3],[3,3],[3,1]]]}]}',
    "MULTIPOLYGON (((0 0, 2 0, 2 1, 0 1)), ((3 0, 4 0, 3.5 2)))",
    "MULTIPOLYGON (((0 0, 1 0, 1 3, 0 3)))",
    "MULTIPOLYGON (((0 0, 2 0, 2 1, 1 1, 1 3, 0 3)))",
]


def _paths(texts=FIXTURES):
    return [tuple_multiset(build_graph(parse_multipolygon(t))) for t in texts]


def _numeric_grad_check(model, batch, labels, step=1e-5):
    _, grads = loss_and_grads(model, batch, labels)
    worst = 0.0
    for (name, p), g in zip(model.params(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp, _ = cross_entropy(forward(model, batch, training=True), labels)
            flat[i] = orig - step
            lm, _ = cross_entropy(forward(model, batch, training=True), labels)
            flat[i] = orig
            num = (lp - lm) / (2 * step)
            # exact zeros (e.g. biases ahead of batch norm) make a bare ratio meaningless
            rel = abs(num - gflat[i]) / max(abs(num), abs(gflat[i]), 1e-6)
            worst = max(worst, rel)
    return worst


def test_gradient_check_small():
    model = MultipolygonGNN(hidden=4, n_layers=2, num_classes=3, seed=1)
    batch = collate(_paths())
    # training mode uses batch statistics, so the running averages never enter the loss
    assert _numeric_grad_check(model, batch, np.array([0, 1, 2, 1])) < 1e-4


def test_grads_cover_every_parameter_including_w():
    model = MultipolygonGNN(hidden=4, n_layers=2, seed=0)
    _, grads = loss_and_grads(model, collate(_paths()), np.array([0, 1, 1, 0]))
    names = [n for n, _ in model.params()]
    assert len(grads) == len(names)
    for (n, p), g in zip(model.params(), grads):
        assert g.shape == p.shape, n
    w_grads = [g for (n, _), g in zip(model.params(), grads) if n.endswith(".w")]
    assert len(w_grads) == 2 and all(np.abs(g).sum() > 0 for g in w_grads)


def test_geo_embed_examples():
    model = MultipolygonGNN(hidden=3, n_layers=1, seed=0)
    layer = model.layers[0]
    lin = layer.geo.layers[0]
    lin.W[...] = 0.0
    lin.b[...] = 0.0
    assert np.all(geo_embed(layer, [[1, 1, -math.pi / 2]]) == 0.0)
    # identity affine and a BN that is the identity at inference
    lin.W[...] = np.eye(3)
    lin.running_var[...] = 1.0 - 1e-5
    out = geo_embed(layer, [[1, 1, -math.pi / 2]])
    assert np.allclose(out, [[1, 1, -math.pi / 2]], atol=1e-12)


def test_message_w_scaling():
    model = MultipolygonGNN(hidden=4, n_layers=1, seed=0)
    layer = model.layers[0]
    h = np.zeros((2, 4))
    geo = np.array([[1.0, 2.0, 0.3], [0.5, 1.5, -1.0]])
    base = message(layer, h, h, h, geo, PathType.CC)
    assert np.abs(base).sum() > 0
    layer.w[PathType.CC] = 2.0
    assert np.allclose(message(layer, h, h, h, geo, PathType.CC), 2 * base)
    layer.w[PathType.CC] = 0.0
    assert np.all(message(layer, h, h, h, geo, PathType.CC) == 0.0)
    with pytest.raises(ConfigurationError):
        message(layer, h, h, h, geo, 7)


def test_layer_forward_square_symmetry_and_empty_nodes(square):
    model = MultipolygonGNN(hidden=5, n_layers=1, seed=2)
    batch = collate([tuple_multiset(build_graph(square))])
    h = layer_forward(model.layers[0], batch, np.zeros((4, 5)))
    assert np.allclose(h, h[0], atol=0)
    # drop one path: the node it converged on has an empty sum
    empty = tuple_multiset(build_graph(square)).subset(np.array([True, True, True, False]))
    batch = collate([empty])
    h = layer_forward(model.layers[0], batch, np.zeros((4, 5)))
    missing = set(range(4)) - set(empty.head.tolist())
    assert all(np.all(h[i] == 0) for i in missing)


def test_path_order_does_not_change_output():
    p = _paths()[0]
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(p))
    shuffled = p.subset(perm)
    model = MultipolygonGNN(hidden=6, n_layers=2, seed=0)
    assert np.array_equal(forward(model, collate([p])), forward(model, collate([shuffled])))
    assert np.array_equal(canonical_order(p).shape, (len(p),))


def test_readout_examples():
    model = MultipolygonGNN(hidden=4, n_layers=1, seed=3)
    p = _paths()[0]
    batch = collate([p])
    h = layer_forward(model.layers[0], batch, np.zeros((p.n_nodes, 4)))
    assert np.allclose(graph_readout([h], batch), h.sum(0, keepdims=True))
    const = np.ones((p.n_nodes, 4)) * 2.5
    assert np.allclose(graph_readout([const], batch), p.n_nodes * 2.5)


def test_readout_doubles_for_disjoint_union():
    one = parse_multipolygon("MULTIPOLYGON (((0 0, 2 0, 2 1, 0 1)), ((3 0, 4 0, 3.5 2)))")
    # geometric copies would gain cross edges between them, so build the union from path sets
    p = tuple_multiset(build_graph(one))
    n = p.n_nodes
    union = TwoHopPaths(*(np.concatenate([a, a + n]) for a in (p.head, p.mid, p.tail)),
                        *(np.concatenate([a, a]) for a in (p.d_ij, p.d_jk, p.theta, p.type_ij, p.type_jk)),
                        n_nodes=2 * n)
    model = MultipolygonGNN(hidden=4, n_layers=2, seed=0)
    single = embed(model, collate([p]))
    double = embed(model, collate([union]))
    assert np.allclose(double, 2 * single, rtol=1e-12, atol=1e-12)


def test_node_relabel_invariance():
    p = _paths()[1]
    perm = np.random.default_rng(4).permutation(p.n_nodes)
    q = TwoHopPaths(perm[p.head], perm[p.mid], perm[p.tail], p.d_ij, p.d_jk, p.theta,
                    p.type_ij, p.type_jk, p.n_nodes)
    model = MultipolygonGNN(hidden=4, n_layers=2, seed=0)
    assert np.allclose(embed(model, collate([p])), embed(model, collate([q])), rtol=0, atol=1e-12)


def test_zero_head_gives_zero_logits_and_bias_gradient():
    model = MultipolygonGNN(hidden=4, n_layers=2, num_classes=3, seed=0)
    last = model.head.layers[-1]
    last.W[...] = 0.0
    last.b[...] = 0.0
    batch = collate(_paths())
    labels = np.array([0, 2, 2, 1])
    logits = forward(model, batch)
    assert np.all(logits == 0.0)
    loss, _ = cross_entropy(logits, labels)
    assert loss == pytest.approx(math.log(3))
    _, grads = loss_and_grads(model, batch, labels)
    bias_grad = grads[[n for n, _ in model.params()].index(f"head.{len(model.head.layers) - 1}.b")]
    expected = (np.full((4, 3), 1 / 3) - np.eye(3)[labels]).mean(0)
    assert np.allclose(bias_grad, expected, atol=1e-15)


def test_inference_batch_independence():
    model = MultipolygonGNN(hidden=6, n_layers=2, seed=0)
    paths = _paths()
    # move running stats away from their defaults first
    loss_and_grads(model, collate(paths), np.array([0, 1, 1, 0]))
    alone = forward(model, collate(paths[:1]))
    paired = forward(model, collate(paths[:2]))
    assert np.array_equal(alone[0], paired[0])


def test_discrimination_square_vs_rectangle():
    sq = tuple_multiset(build_graph(parse_multipolygon("POLYGON ((0 0, 1 0, 1 1, 0 1, 0 0))")))
    rect = tuple_multiset(build_graph(parse_multipolygon("POLYGON ((0 0, 2 0, 2 1, 0 1, 0 0))")))
    hits = 0
    for seed in range(100):
        model = MultipolygonGNN(hidden=8, n_layers=2, seed=seed)
        a = embed(model, collate([sq]))
        b = embed(model, collate([rect]))
        hits += np.abs(a - b).max() > 1e-6
    assert hits >= 95


def test_non_finite_loss_raises():
    with pytest.raises(NumericalError):
        cross_entropy(np.array([[np.nan, 0.0]]), np.array([0]))


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        MultipolygonGNN(hidden=0)
    with pytest.raises(ConfigurationError):
        MultipolygonGNN(num_classes=1)
    model = MultipolygonGNN(hidden=4, n_layers=1)
    model.head = DenseStack([5, 4, 2], np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        forward(model, collate(_paths()))


def test_interaction_weights():
    model = MultipolygonGNN(hidden=4, n_layers=2, seed=0)
    w = interaction_weights(model)
    assert all(v == 0.25 for layer in w["per_layer"] for v in layer.values())
    model.layers[1].w[:] = [0.0, 1.0, -2.0, 1.0]
    w = interaction_weights(model)
    assert w["per_layer"][1]["II"] == 0.0
    assert w["per_layer"][1]["CI"] == 0.5
    for layer in w["per_layer"]:
        assert sum(layer.values()) == pytest.approx(1.0)
    assert sum(w["aggregate"].values()) == pytest.approx(1.0)


def test_checkpoint_round_trip(tmp_path):
    model = MultipolygonGNN(hidden=5, n_layers=2, num_classes=3, seed=7)
    loss_and_grads(model, collate(_paths()), np.array([0, 1, 2, 1]))
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path, extra={"seeds": {"model": 7}})
    again, header = load_checkpoint(path)
    assert header["seeds"] == {"model": 7}
    assert again.config() == model.config()
    for a, b in zip(model.state(), again.state()):
        assert np.array_equal(a, b)
    batch = collate(_paths())
    assert np.array_equal(forward(model, batch), forward(again, batch))
    blob = dumps(model)
    with pytest.raises(ValueError):
        loads(blob[:-8])


def test_adam_matches_reference_update():
    p = np.array([1.0, -2.0])
    opt = Adam([p], lr=0.1)
    g = np.array([0.5, -1.0])
    opt.step([g])
    # first Adam step moves every coordinate by lr * sign(g) (bias-corrected m/sqrt(v))
    assert np.allclose(p, [1.0 - 0.1, -2.0 + 0.1], atol=1e-6)


def test_plateau_scheduler():
    opt = Adam([np.zeros(1)], lr=1.0)
    sched = ReduceLROnPlateau(opt, factor=0.5, patience=2)
    for v in [1.0, 0.9, 0.9, 0.9, 0.9]:
        sched.step(v)
    assert opt.lr == 0.5
    sched.step(0.1)
    assert opt.lr == 0.5


def test_random_corpus_forward_finite():
    paths = [tuple_multiset(build_graph(random_multipolygon(s))) for s in range(6)]
    logits = forward(MultipolygonGNN(hidden=8, n_layers=3, num_classes=4, seed=0), collate(paths))
    assert logits.shape == (6, 4) and np.isfinite(logits).all()
