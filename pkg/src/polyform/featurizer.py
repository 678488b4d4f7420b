"""Two-hop paths and their rotation/translation invariant five-tuples.

A path ``i <- j <- k`` is described by ``(d_ij, d_jk, theta, type_ij,
type_jk)``, where ``theta`` is the clockwise-positive angle at ``j`` from
ray j->i to ray j->k, wrapped into [-pi, pi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .geometry import GeometryError
from .hetgraph import EdgeType, HeteroVisibilityGraph, graph_from_edges

EPS_REC = 1e-6


class PathType(IntEnum):
    """Edge types along a path, first the (j, i) edge then the (k, j) edge."""
    II = 0
    IC = 1
    CI = 2
    CC = 3

    @classmethod
    def of(cls, type_ij, type_jk) -> "PathType":
        return cls(2 * int(type_ij) + int(type_jk))


class DegenerateGeometryError(GeometryError):
    pass


class ReconstructionError(ValueError):
    pass


class TwoHopPath(NamedTuple):
    i: int
    j: int
    k: int


class TwoHopTuple(NamedTuple):
    d_ij: float
    d_jk: float
    theta: float
    type_ij: EdgeType
    type_jk: EdgeType


@dataclass(frozen=True, eq=False)
class TwoHopPaths:
    """Column-oriented collection of paths and their tuples."""

    head: np.ndarray
    mid: np.ndarray
    tail: np.ndarray
    d_ij: np.ndarray
    d_jk: np.ndarray
    theta: np.ndarray
    type_ij: np.ndarray
    type_jk: np.ndarray
    n_nodes: int

    def __len__(self):
        return len(self.head)

    @property
    def path_type(self) -> np.ndarray:
        return 2 * self.type_ij + self.type_jk

    @property
    def geo(self) -> np.ndarray:
        return np.stack([self.d_ij, self.d_jk, self.theta], axis=1)

    def tuples(self) -> list[TwoHopTuple]:
        return [TwoHopTuple(float(a), float(b), float(t), EdgeType(int(x)), EdgeType(int(y)))
                for a, b, t, x, y in zip(self.d_ij, self.d_jk, self.theta, self.type_ij, self.type_jk)]

    def paths(self) -> list[TwoHopPath]:
        return [TwoHopPath(int(i), int(j), int(k)) for i, j, k in zip(self.head, self.mid, self.tail)]

    def subset(self, mask) -> "TwoHopPaths":
        return TwoHopPaths(self.head[mask], self.mid[mask], self.tail[mask], self.d_ij[mask],
                           self.d_jk[mask], self.theta[mask], self.type_ij[mask],
                           self.type_jk[mask], self.n_nodes)

    def grouped(self) -> dict:
        """Row indices keyed by ``(head, PathType)``."""
        out: dict = {}
        for r, (h, t) in enumerate(zip(self.head.tolist(), self.path_type.tolist())):
            out.setdefault((h, PathType(t)), []).append(r)
        return out


def wrap_angle(a):
    """Map angles into [-pi, pi); exactly +pi maps to -pi."""
    return np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi


def clockwise_angle(p_i, p_j, p_k):
    """Clockwise-positive angle at p_j from ray j->i to ray j->k (vectorised)."""
    u = np.asarray(p_i, dtype=float) - p_j
    v = np.asarray(p_k, dtype=float) - p_j
    cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    dot = (u * v).sum(-1)
    return wrap_angle(-np.arctan2(cross, dot))


def _in_edges(g: HeteroVisibilityGraph):
    src, dst, etype = g.directed_edges()
    order = np.lexsort((src, dst))
    src, dst, etype = src[order], dst[order], etype[order]
    starts = np.searchsorted(dst, np.arange(g.n_nodes + 1))
    return src, dst, etype, starts


def enumerate_all(g: HeteroVisibilityGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """All paths i <- j <- k with k != i as (head, mid, tail, type_ij, type_jk).

    Inner edges are followed only along their direction, cross edges both
    ways. Rows are ordered by head, then mid, then tail.
    """
    src, dst, etype, starts = _in_edges(g)
    # for each directed edge (j -> i), pair it with every edge (k -> j)
    deg = starts[1:] - starts[:-1]
    counts = deg[src]
    e1 = np.repeat(np.arange(len(src)), counts)
    offsets = np.arange(len(e1)) - np.repeat(np.cumsum(counts) - counts, counts)
    e2 = starts[src[e1]] + offsets
    head, mid, tail = dst[e1], src[e1], src[e2]
    keep = tail != head
    head, mid, tail = head[keep], mid[keep], tail[keep]
    t_ij, t_jk = etype[e1][keep], etype[e2][keep]
    order = np.lexsort((tail, mid, head))
    return head[order], mid[order], tail[order], t_ij[order], t_jk[order]


def enumerate_two_hop(g: HeteroVisibilityGraph, i: int) -> set[TwoHopPath]:
    head, mid, tail, _, _ = enumerate_all(g)
    sel = head == i
    return {TwoHopPath(int(a), int(b), int(c)) for a, b, c in zip(head[sel], mid[sel], tail[sel])}


def tuple_of(g: HeteroVisibilityGraph, path: TwoHopPath) -> TwoHopTuple:
    i, j, k = path
    xy = g.coords
    d_ij = math.dist(xy[i], xy[j])
    d_jk = math.dist(xy[j], xy[k])
    if d_ij == 0 or d_jk == 0:
        raise DegenerateGeometryError(f"path {path} has coincident nodes")
    theta = float(clockwise_angle(xy[i], xy[j], xy[k]))
    return TwoHopTuple(d_ij, d_jk, theta, _edge_type(g, j, i), _edge_type(g, k, j))


def _edge_type(g: HeteroVisibilityGraph, src: int, dst: int) -> EdgeType:
    if ((g.inner_edges[:, 0] == src) & (g.inner_edges[:, 1] == dst)).any():
        return EdgeType.INNER
    a, b = min(src, dst), max(src, dst)
    if ((g.cross_edges[:, 0] == a) & (g.cross_edges[:, 1] == b)).any():
        return EdgeType.CROSS
    raise ValueError(f"no traversable edge {src} -> {dst}")


def tuple_multiset(g: HeteroVisibilityGraph) -> TwoHopPaths:
    head, mid, tail, t_ij, t_jk = enumerate_all(g)
    xy = g.coords
    d_ij = np.linalg.norm(xy[head] - xy[mid], axis=1)
    d_jk = np.linalg.norm(xy[mid] - xy[tail], axis=1)
    if len(head) and (d_ij.min() == 0 or d_jk.min() == 0):
        raise DegenerateGeometryError("graph has coincident nodes")
    theta = clockwise_angle(xy[head], xy[mid], xy[tail])
    return TwoHopPaths(head, mid, tail, d_ij, d_jk, theta, t_ij, t_jk, g.n_nodes)


def locate_tail(p_i, p_j, d_jk, theta):
    """Global position of v_k from v_i, v_j and the tuple (vectorised).

    In the frame centred at v_j with +x along ray v_i -> v_j, the tail sits
    at (-d_jk cos theta, d_jk sin theta).
    """
    p_i = np.asarray(p_i, dtype=float)
    p_j = np.asarray(p_j, dtype=float)
    u = p_j - p_i
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    perp = np.stack([-u[..., 1], u[..., 0]], axis=-1)
    x = -np.asarray(d_jk) * np.cos(theta)
    y = np.asarray(d_jk) * np.sin(theta)
    return p_j + x[..., None] * u + y[..., None] * perp


def reconstruct_from_tuples(paths: TwoHopPaths, seed_path: int = 0,
                            tol: float = EPS_REC) -> HeteroVisibilityGraph:
    """Rebuild a graph equal to the source up to a rigid motion.

    Places the seed path's middle node at the origin and its head on the
    negative x axis, then repeatedly places tails of paths whose head and
    middle are already fixed.
    """
    n = paths.n_nodes
    if len(paths) == 0:
        raise ReconstructionError("no tuples to reconstruct from")
    pos = np.full((n, 2), np.nan)
    placed = np.zeros(n, dtype=bool)
    s = seed_path
    i0, j0 = paths.head[s], paths.mid[s]
    pos[j0] = (0.0, 0.0)
    pos[i0] = (-paths.d_ij[s], 0.0)
    placed[[i0, j0]] = True

    head, mid, tail = paths.head, paths.mid, paths.tail
    while True:
        ready = placed[head] & placed[mid] & ~placed[tail]
        if not ready.any():
            break
        rows = np.flatnonzero(ready)
        # first row wins per tail; the rest are checked afterwards
        _, first = np.unique(tail[rows], return_index=True)
        rows = rows[first]
        pos[tail[rows]] = locate_tail(pos[head[rows]], pos[mid[rows]], paths.d_jk[rows],
                                      paths.theta[rows])
        placed[tail[rows]] = True

    if not placed.all():
        raise ReconstructionError(
            f"tuples do not connect nodes {np.flatnonzero(~placed).tolist()} to the seed path")
    predicted = locate_tail(pos[head], pos[mid], paths.d_jk, paths.theta)
    dev = np.linalg.norm(predicted - pos[tail], axis=1)
    d_dev = np.abs(np.linalg.norm(pos[head] - pos[mid], axis=1) - paths.d_ij)
    worst = max(dev.max(), d_dev.max())
    if worst > tol:
        raise ReconstructionError(f"inconsistent tuples: node positions disagree by {worst:.3g}")

    inner = set()
    cross = set()
    for i, j, k, tij, tjk in zip(head.tolist(), mid.tolist(), tail.tolist(),
                                  paths.type_ij.tolist(), paths.type_jk.tolist()):
        if tij == EdgeType.INNER:
            inner.add((j, i))
        else:
            cross.add((min(i, j), max(i, j)))
        if tjk == EdgeType.INNER:
            inner.add((k, j))
        else:
            cross.add((min(j, k), max(j, k)))
    return graph_from_edges(pos, sorted(inner), sorted(cross))
