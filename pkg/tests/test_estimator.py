import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from polyform.data import DatasetSpec, gen_dataset
from polyform.estimator import (
    PolygonGNNClassifier,
    TwoHopFeaturizer,
    VisibilityGraphTransformer,
    check_multipolygons,
)
from polyform.hetgraph import HeteroVisibilityGraph
from polyform.io import multipolygon_to_dict, serialize_multipolygon


@pytest.fixture(scope="module")
def shapes():
    samples = gen_dataset(DatasetSpec("single-shape", 45, 3, 0.05, 0))
    names = np.array(["I", "L", "T"])
    return [s.mp for s in samples], names[[s.label for s in samples]]


def test_check_multipolygons_coerces(shapes):
    X, _ = shapes
    mixed = [X[0], serialize_multipolygon(X[1], "wkt"), multipolygon_to_dict(X[2])]
    out = check_multipolygons(mixed)
    assert out[1] == X[1] and out[2] == X[2]
    with pytest.raises(TypeError):
        check_multipolygons(X[0])
    with pytest.raises(TypeError):
        check_multipolygons([3.5])
    with pytest.raises(ValueError):
        check_multipolygons([])


def test_transformers(shapes):
    X, _ = shapes
    graphs = VisibilityGraphTransformer().fit_transform(X[:3])
    assert all(isinstance(g, HeteroVisibilityGraph) for g in graphs)
    paths = TwoHopFeaturizer(sample_seed=0).fit_transform(graphs)
    assert len(paths) == 3 and all(len(p) > 0 for p in paths)


def test_params_and_clone():
    est = PolygonGNNClassifier(hidden=16, n_layers=2)
    params = est.get_params()
    assert params["hidden"] == 16 and params["n_layers"] == 2
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(lr=0.01)
    assert est.lr == 0.01


def test_fit_predict_string_labels(shapes):
    X, y = shapes
    est = PolygonGNNClassifier(hidden=16, n_layers=2, max_epochs=60, batch_size=16, random_state=0)
    est.fit(X, y)
    assert list(est.classes_) == ["I", "L", "T"]
    proba = est.predict_proba(X)
    assert proba.shape == (45, 3) and np.allclose(proba.sum(1), 1)
    assert est.score(X, y) >= 0.8
    assert est.embed(X[:4]).shape == (4, 32)
    assert est.report_.history


def test_fit_with_eval_set(shapes):
    X, y = shapes
    est = PolygonGNNClassifier(hidden=4, n_layers=1, max_epochs=2)
    est.fit(X[:30], y[:30], eval_set=(X[30:], y[30:]))
    assert est.predict(X[30:]).shape == (15,)


def test_errors(shapes):
    X, y = shapes
    with pytest.raises(NotFittedError):
        PolygonGNNClassifier().predict(X)
    with pytest.raises(ValueError):
        PolygonGNNClassifier(max_epochs=1).fit(X, y[:-1])
    with pytest.raises(ValueError):
        PolygonGNNClassifier(max_epochs=1).fit(X, ["a"] * len(X))
