"""Visibility graphs, two-hop tuples and a numpy GNN for multipolygon classification."""
from .estimator import PolygonGNNClassifier, TwoHopFeaturizer, VisibilityGraphTransformer, check_multipolygons
from .featurizer import TwoHopPaths, reconstruct_from_tuples, tuple_multiset
from .geometry import GeometryError, Multipolygon, Polygon, RigidTransform, apply_transform
from .hetgraph import HeteroVisibilityGraph, build_graph, canonical_form, reconstruct_multipolygon
from .io import parse_multipolygon, serialize_multipolygon
from .metrics import count_messages, evaluate
from .sampler import reduced_graph, sample_spanning_tree

__version__ = "0.1.0"

__all__ = [
    "GeometryError", "HeteroVisibilityGraph", "Multipolygon", "Polygon", "PolygonGNNClassifier",
    "RigidTransform", "TwoHopFeaturizer", "TwoHopPaths", "VisibilityGraphTransformer",
    "apply_transform", "build_graph", "canonical_form", "check_multipolygons", "count_messages",
    "evaluate", "parse_multipolygon", "reconstruct_from_tuples", "reconstruct_multipolygon",
    "reduced_graph", "sample_spanning_tree", "serialize_multipolygon", "tuple_multiset",
]
