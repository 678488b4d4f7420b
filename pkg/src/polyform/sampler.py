"""Randomised spanning-tree reduction of cross edges over polygon parts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .hetgraph import HeteroVisibilityGraph


class DisconnectedPartsError(ValueError):
    def __init__(self, unreachable):
        self.unreachable = sorted(unreachable)
        super().__init__(f"parts {self.unreachable} are not reachable through cross edges")


@dataclass(frozen=True, eq=False)
class SampledGraph:
    base: HeteroVisibilityGraph
    selected_cross: np.ndarray
    seed: int


def sample_spanning_tree(g: HeteroVisibilityGraph, seed: int) -> SampledGraph:
    """Shuffle the cross edges with ``seed`` and keep each one that joins two
    not-yet-connected parts (randomised Kruskal)."""
    parts = DisjointSet(range(g.n_parts))
    for u, v in g.cross_edges:
        parts.merge(int(g.part_of[u]), int(g.part_of[v]))
    if parts.n_subsets > 1:
        reachable = parts.subset(0)
        raise DisconnectedPartsError(set(range(g.n_parts)) - reachable)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(g.cross_edges))
    tree = DisjointSet(range(g.n_parts))
    chosen = []
    for e in order:
        if len(chosen) == g.n_parts - 1:
            break
        u, v = g.cross_edges[e]
        if tree.merge(int(g.part_of[u]), int(g.part_of[v])):
            chosen.append(e)
    selected = g.cross_edges[np.asarray(chosen, dtype=np.int64)].reshape(-1, 2)
    selected.setflags(write=False)
    return SampledGraph(g, selected, seed)


def reduced_graph(s: SampledGraph) -> HeteroVisibilityGraph:
    return s.base.with_cross_edges(s.selected_cross)
