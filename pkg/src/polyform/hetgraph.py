"""Heterogeneous visibility graphs and their inversion back to multipolygons."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geometry import (
    GeometryError,
    Multipolygon,
    Polygon,
    point_in_ring,
    signed_area,
    validate_multipolygon,
    visibility_matrix,
)


class EdgeType(IntEnum):
    INNER = 0
    CROSS = 1


class StructureError(GeometryError):
    """Graph edges do not describe a valid set of rings."""


@dataclass(frozen=True)
class Part:
    part_id: int
    is_hole: bool
    owner: int


@dataclass(frozen=True, eq=False)
class HeteroVisibilityGraph:
    """Nodes are polygon vertices; ``coords[i]`` is node i's position.

    ``inner_edges`` holds directed (src, dst) pairs tracing every ring;
    ``cross_edges`` holds undirected pairs stored once with ``u < v``.
    """

    coords: np.ndarray
    part_of: np.ndarray
    inner_edges: np.ndarray
    cross_edges: np.ndarray
    parts: tuple[Part, ...]

    def __post_init__(self):
        for name, dtype, shape in (("coords", float, (-1, 2)), ("part_of", np.int64, (-1,)),
                                   ("inner_edges", np.int64, (-1, 2)),
                                   ("cross_edges", np.int64, (-1, 2))):
            arr = np.array(getattr(self, name), dtype=dtype).reshape(shape)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def with_cross_edges(self, cross_edges) -> "HeteroVisibilityGraph":
        return HeteroVisibilityGraph(self.coords, self.part_of, self.inner_edges,
                                     np.asarray(cross_edges, dtype=np.int64).reshape(-1, 2),
                                     self.parts)

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Traversable (src, dst, type): inner edges once, cross edges both ways."""
        c = self.cross_edges
        src = np.concatenate([self.inner_edges[:, 0], c[:, 0], c[:, 1]])
        dst = np.concatenate([self.inner_edges[:, 1], c[:, 1], c[:, 0]])
        etype = np.concatenate([
            np.full(len(self.inner_edges), EdgeType.INNER, dtype=np.int64),
            np.full(2 * len(c), EdgeType.CROSS, dtype=np.int64),
        ])
        return src, dst, etype

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": i, "x": float(x), "y": float(y), "part": int(p)}
                      for i, ((x, y), p) in enumerate(zip(self.coords, self.part_of))],
            "parts": [{"id": p.part_id, "hole": p.is_hole, "owner": p.owner} for p in self.parts],
            "inner_edges": self.inner_edges.tolist(),
            "cross_edges": self.cross_edges.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "HeteroVisibilityGraph":
        try:
            nodes = sorted(obj["nodes"], key=lambda n: n["id"])
            if [n["id"] for n in nodes] != list(range(len(nodes))):
                raise StructureError("node ids must be 0..n-1")
            coords = [(n["x"], n["y"]) for n in nodes]
            part_of = [n["part"] for n in nodes]
            inner = obj["inner_edges"]
            cross = obj["cross_edges"]
        except (KeyError, TypeError) as exc:
            raise StructureError(f"malformed graph JSON: missing {exc}") from None
        if "parts" in obj:
            parts = tuple(Part(p["id"], bool(p["hole"]), p["owner"]) for p in obj["parts"])
            return cls(coords, part_of, inner, cross, parts)
        return graph_from_edges(coords, inner, cross)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def build_graph(mp: Multipolygon, validate: bool = True) -> HeteroVisibilityGraph:
    """Nodes in polygon order (exterior, then holes), one inner cycle per
    ring, and a cross edge for every visible vertex pair in different parts."""
    if validate:
        validate_multipolygon(mp)
    coords, part_of, inner, parts = [], [], [], []
    for pid, (owner, is_hole, ring) in enumerate(mp.parts()):
        base = len(coords)
        n = len(ring)
        coords.extend(ring)
        part_of.extend([pid] * n)
        inner.extend((base + k, base + (k + 1) % n) for k in range(n))
        parts.append(Part(pid, is_hole, owner))
    xy = np.asarray(coords, dtype=float)
    part_arr = np.asarray(part_of)
    u, v = np.triu_indices(len(xy), k=1)
    keep = part_arr[u] != part_arr[v]
    u, v = u[keep], v[keep]
    inner_arr = np.asarray(inner)
    seg_a = xy[inner_arr[:, 0]]
    seg_b = xy[inner_arr[:, 1]]
    vis = visibility_matrix(xy[u], xy[v], seg_a, seg_b)
    cross = np.stack([u[vis], v[vis]], axis=1)
    return HeteroVisibilityGraph(xy, part_arr, inner_arr, cross, tuple(parts))


def trace_rings(n_nodes: int, inner_edges) -> list[list[int]]:
    """Follow directed inner edges into disjoint cycles covering every node."""
    inner_edges = np.asarray(inner_edges, dtype=np.int64).reshape(-1, 2)
    succ = np.full(n_nodes, -1)
    indeg = np.zeros(n_nodes, dtype=int)
    for s, d in inner_edges:
        if not (0 <= s < n_nodes and 0 <= d < n_nodes):
            raise StructureError(f"inner edge ({s}, {d}) references a missing node")
        if s == d:
            raise StructureError(f"self-loop at node {s}")
        if succ[s] != -1:
            raise StructureError(f"node {s} has more than one outgoing inner edge")
        succ[s] = d
        indeg[d] += 1
    missing = np.flatnonzero(succ == -1)
    if len(missing):
        raise StructureError(f"nodes without an outgoing inner edge: {missing.tolist()}")
    if (indeg != 1).any():
        raise StructureError(f"nodes with in-degree != 1: {np.flatnonzero(indeg != 1).tolist()}")
    seen = np.zeros(n_nodes, dtype=bool)
    rings = []
    for start in range(n_nodes):
        if seen[start]:
            continue
        ring = []
        node = start
        while not seen[node]:
            seen[node] = True
            ring.append(node)
            node = succ[node]
        if node != start:
            raise StructureError(f"inner edges from node {start} do not close a cycle")
        if len(ring) < 3:
            raise StructureError(f"ring through node {start} has fewer than 3 nodes")
        rings.append(ring)
    return rings


def _assign_rings(coords: np.ndarray, rings: list[list[int]]):
    """Classify rings by orientation and attach each hole to its exterior."""
    pts = [[tuple(coords[k]) for k in ring] for ring in rings]
    areas = [signed_area(p) for p in pts]
    exteriors = [r for r, a in enumerate(areas) if a > 0]
    if not exteriors:
        raise StructureError("no counterclockwise (exterior) ring found")
    owner = {}
    for r, a in enumerate(areas):
        if a > 0:
            owner[r] = exteriors.index(r)
            continue
        containing = [e for e in exteriors if point_in_ring(pts[r][0], pts[e])]
        if not containing:
            raise StructureError(f"hole ring starting at node {rings[r][0]} lies in no exterior")
        best = min(containing, key=lambda e: areas[e])
        owner[r] = exteriors.index(best)
    return pts, areas, owner, exteriors


def graph_from_edges(coords, inner_edges, cross_edges) -> HeteroVisibilityGraph:
    """Rebuild part bookkeeping for a graph given only coordinates and edges."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    rings = trace_rings(len(coords), inner_edges)
    _, areas, owner, _ = _assign_rings(coords, rings)
    part_of = np.empty(len(coords), dtype=np.int64)
    parts = []
    for pid, ring in enumerate(rings):
        part_of[ring] = pid
        parts.append(Part(pid, areas[pid] < 0, owner[pid]))
    cross = np.asarray(cross_edges, dtype=np.int64).reshape(-1, 2)
    cross = np.sort(cross, axis=1)
    if len(cross) and (part_of[cross[:, 0]] == part_of[cross[:, 1]]).any():
        raise StructureError("cross edge joins two nodes of the same part")
    return HeteroVisibilityGraph(coords, part_of, inner_edges, cross, tuple(parts))


def reconstruct_multipolygon(g: HeteroVisibilityGraph) -> Multipolygon:
    """Invert :func:`build_graph` using only coordinates and inner edges."""
    rings = trace_rings(g.n_nodes, g.inner_edges)
    pts, areas, owner, exteriors = _assign_rings(g.coords, rings)
    holes = {i: [] for i in range(len(exteriors))}
    for r in range(len(rings)):
        if areas[r] < 0:
            holes[owner[r]].append(pts[r])
    polys = [Polygon(tuple(pts[e]), tuple(holes[i])) for i, e in enumerate(exteriors)]
    return Multipolygon(tuple(polys))


def _canonical_ring(ring):
    k = min(range(len(ring)), key=lambda i: ring[i])
    return tuple(ring[k:]) + tuple(ring[:k])


def canonical_form(mp: Multipolygon) -> Multipolygon:
    polys = []
    for p in mp.polygons:
        holes = sorted((_canonical_ring(h) for h in p.holes), key=lambda r: r[0])
        polys.append(Polygon(_canonical_ring(p.exterior), tuple(holes)))
    polys.sort(key=lambda p: p.exterior[0])
    return Multipolygon(tuple(polys))


@dataclass(frozen=True)
class PartSupergraph:
    supernodes: tuple[int, ...]
    superedges: dict  # (part_a, part_b) with a < b -> list of (u, v) cross edges


def part_supergraph(g: HeteroVisibilityGraph) -> PartSupergraph:
    edges: dict = {}
    for u, v in g.cross_edges.tolist():
        a, b = int(g.part_of[u]), int(g.part_of[v])
        key = (min(a, b), max(a, b))
        edges.setdefault(key, []).append((u, v))
    return PartSupergraph(tuple(p.part_id for p in g.parts), edges)
