import numpy as np
import pytest

from polyform.data import DatasetSpec, gen_dataset
from polyform.geometry import Multipolygon, Polygon
from polyform.hetgraph import build_graph
from polyform.nn import training
from polyform.nn.model import MultipolygonGNN, NumericalError
from polyform.nn.training import TrainConfig, _batches, eval_paths, predict_logits, train


def _toy(n=40, seed=0):
    """Squares versus triangles of random size: separable by angle alone."""
    rng = np.random.default_rng(seed)
    graphs, labels = [], []
    for i in range(n):
        s = rng.uniform(0.5, 2.0)
        if i % 2 == 0:
            ring = ((0, 0), (s, 0), (s, s), (0, s))
        else:
            ring = ((0, 0), (s, 0), (0, s))
        graphs.append(build_graph(Multipolygon((Polygon(ring),))))
        labels.append(i % 2)
    return graphs, np.array(labels)


def test_separable_toy_reaches_low_loss():
    g, y = _toy()
    model = MultipolygonGNN(hidden=8, n_layers=1, seed=0)
    cfg = TrainConfig(lr=1e-2, batch_size=8, max_epochs=200, sample=False)
    report = train(model, g[:30], y[:30], g[30:], y[30:], cfg)
    assert min(r.train_loss for r in report.history) < 0.05
    acc = (predict_logits(model, eval_paths(g[30:], cfg)).argmax(1) == y[30:]).mean()
    assert acc == 1.0


def test_same_seeds_identical_curves():
    g, y = _toy(24)
    cfg = TrainConfig(batch_size=6, max_epochs=4)
    reports = []
    for _ in range(2):
        m = MultipolygonGNN(hidden=4, n_layers=2, seed=3)
        reports.append(train(m, g[:16], y[:16], g[16:], y[16:], cfg).to_csv())
    assert reports[0] == reports[1]


def test_zero_learning_rate_keeps_params():
    g, y = _toy(20)
    m = MultipolygonGNN(hidden=4, n_layers=2, seed=0)
    before = [a.copy() for _, a in m.params()]
    train(m, g[:12], y[:12], g[12:], y[12:], TrainConfig(lr=0.0, batch_size=4, max_epochs=3))
    for a, (_, b) in zip(before, m.params()):
        assert np.array_equal(a, b)


def test_divergence_restores_last_good_state(monkeypatch):
    g, y = _toy(20)
    m = MultipolygonGNN(hidden=4, n_layers=1, seed=0)
    calls = {"n": 0}
    real = training.loss_and_grads

    def flaky(model, batch, labels):
        calls["n"] += 1
        if calls["n"] > 6:
            raise NumericalError("loss is nan")
        return real(model, batch, labels)

    monkeypatch.setattr(training, "loss_and_grads", flaky)
    report = train(m, g[:12], y[:12], g[12:], y[12:], TrainConfig(batch_size=4, max_epochs=10))
    assert report.diverged
    assert "nan" in report.message
    assert len(report.history) == 2
    assert all(np.isfinite(a).all() for _, a in m.params())


def test_early_stopping_and_best_state():
    g, y = _toy(20)
    m = MultipolygonGNN(hidden=4, n_layers=1, seed=0)
    cfg = TrainConfig(lr=0.0, batch_size=4, max_epochs=50, early_stop_patience=3)
    report = train(m, g[:12], y[:12], g[12:], y[12:], cfg)
    assert report.stopped_early
    assert len(report.history) == report.best_epoch + 3


def test_batches_merge_single_trailing_sample():
    rng = np.random.default_rng(0)
    chunks = _batches(65, 64, rng)
    assert [len(c) for c in chunks] == [65]
    chunks = _batches(129, 64, rng)
    assert [len(c) for c in chunks] == [64, 65]
    assert sorted(np.concatenate(chunks).tolist()) == list(range(129))


def test_train_rejects_empty_sets():
    g, y = _toy(4)
    with pytest.raises(ValueError):
        train(MultipolygonGNN(hidden=2, n_layers=1), [], [], g, y, TrainConfig())


def test_report_csv_header():
    g, y = _toy(12)
    report = train(MultipolygonGNN(hidden=2, n_layers=1), g[:8], y[:8], g[8:], y[8:],
                   TrainConfig(max_epochs=2, batch_size=4))
    lines = report.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_acc,lr"
    assert len(lines) == 3


def test_sampling_uses_epoch_seeds(monkeypatch):
    seen = []
    real = training.graph_paths

    def spy(graph, seed):
        seen.append(seed)
        return real(graph, seed)

    monkeypatch.setattr(training, "graph_paths", spy)
    ds = gen_dataset(DatasetSpec("pair-shape", 18, 3, 0.05, 0))
    tr, va = ds[:9], ds[9:]
    g = [build_graph(s.mp) for s in tr]
    gv = [build_graph(s.mp) for s in va]
    train(MultipolygonGNN(hidden=2, n_layers=1, num_classes=9), g, [s.label for s in tr], gv,
          [s.label for s in va], TrainConfig(max_epochs=2, batch_size=4, sample_seed=10))
    assert set(seen) == {10, 11, 12}
