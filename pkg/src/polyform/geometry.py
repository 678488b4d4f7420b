"""Planar geometry for multipolygons.

Rings are tuples of ``(x, y)`` float pairs with implicit closure. Exteriors
are stored counterclockwise and holes clockwise; the parsers normalise
orientation, the constructors only check shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

EPS_GEO = 1e-9

Point = tuple[float, float]
Ring = tuple[Point, ...]


class GeometryError(ValueError):
    """Invalid geometry."""


class DegenerateRingError(GeometryError):
    pass


class SelfIntersectionError(GeometryError):
    pass


class NestingError(GeometryError):
    """A hole is not strictly inside its exterior, or holes overlap."""


class OverlapError(GeometryError):
    """Two polygons of a multipolygon share interior or boundary points."""


def _as_ring(vertices) -> Ring:
    ring = tuple((float(x), float(y)) for x, y in vertices)
    if len(ring) >= 2 and ring[0] == ring[-1]:
        ring = ring[:-1]
    return ring


def check_ring(ring: Ring) -> None:
    """Cheap structural checks: length, finiteness, no repeated neighbours."""
    if len(ring) < 3:
        raise DegenerateRingError(f"ring needs at least 3 vertices, got {len(ring)}")
    for x, y in ring:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DegenerateRingError(f"non-finite coordinate ({x}, {y})")
    for a, b in zip(ring, ring[1:] + ring[:1]):
        if a == b:
            raise DegenerateRingError(f"consecutive duplicate vertex {a}")


@dataclass(frozen=True)
class Polygon:
    exterior: Ring
    holes: tuple[Ring, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exterior", _as_ring(self.exterior))
        object.__setattr__(self, "holes", tuple(_as_ring(h) for h in self.holes))
        check_ring(self.exterior)
        for h in self.holes:
            check_ring(h)

    @property
    def rings(self) -> tuple[Ring, ...]:
        return (self.exterior,) + self.holes


@dataclass(frozen=True)
class Multipolygon:
    polygons: tuple[Polygon, ...]

    def __post_init__(self):
        polys = tuple(self.polygons)
        if not polys:
            raise GeometryError("a multipolygon needs at least one polygon")
        object.__setattr__(self, "polygons", polys)

    def parts(self) -> Iterator[tuple[int, bool, Ring]]:
        """Yield ``(owner polygon index, is_hole, ring)`` in node order."""
        for i, poly in enumerate(self.polygons):
            yield i, False, poly.exterior
            for h in poly.holes:
                yield i, True, h

    @property
    def n_parts(self) -> int:
        return sum(1 + len(p.holes) for p in self.polygons)

    @property
    def n_vertices(self) -> int:
        return sum(len(r) for _, _, r in self.parts())

    def segments(self) -> list[tuple[Point, Point]]:
        return [(a, b) for _, _, r in self.parts() for a, b in zip(r, r[1:] + r[:1])]


@dataclass(frozen=True)
class RigidTransform:
    """Rotation about the origin by ``angle`` radians, then translation."""

    angle: float = 0.0
    dx: float = 0.0
    dy: float = 0.0

    def apply_point(self, p: Point) -> Point:
        c, s = math.cos(self.angle), math.sin(self.angle)
        x, y = p
        return (c * x - s * y + self.dx, s * x + c * y + self.dy)

    def apply_array(self, xy: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        return xy @ rot.T + np.array([self.dx, self.dy])


def signed_area(ring: Sequence[Point]) -> float:
    if len(ring) < 3:
        raise DegenerateRingError(f"ring needs at least 3 vertices, got {len(ring)}")
    xy = np.asarray(ring, dtype=float)
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def orient(a: Point, b: Point, c: Point) -> float:
    """Twice the signed area of triangle abc; positive when abc turns left."""
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _sign(v: float) -> int:
    if v > EPS_GEO:
        return 1
    if v < -EPS_GEO:
        return -1
    return 0


def _strictly_inside(p: Point, a: Point, b: Point) -> bool:
    """True if p (assumed collinear with ab) lies in the open segment ab."""
    ux, uy = b[0] - a[0], b[1] - a[1]
    length = math.hypot(ux, uy)
    along = ((p[0] - a[0]) * ux + (p[1] - a[1]) * uy) / length
    return EPS_GEO < along < length - EPS_GEO


def segments_properly_cross(a1: Point, a2: Point, b1: Point, b2: Point) -> bool:
    """Whether segments a and b meet anywhere other than at shared endpoints.

    Counts interior crossings, an endpoint of one segment lying in the open
    interior of the other, and identical segments. A touch at a common
    endpoint alone is not a crossing.
    """
    o1 = _sign(orient(a1, a2, b1))
    o2 = _sign(orient(a1, a2, b2))
    o3 = _sign(orient(b1, b2, a1))
    o4 = _sign(orient(b1, b2, a2))
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    if o1 == 0 and _strictly_inside(b1, a1, a2):
        return True
    if o2 == 0 and _strictly_inside(b2, a1, a2):
        return True
    if o3 == 0 and _strictly_inside(a1, b1, b2):
        return True
    if o4 == 0 and _strictly_inside(a2, b1, b2):
        return True
    return {a1, a2} == {b1, b2}


def segments_touch(a1: Point, a2: Point, b1: Point, b2: Point) -> bool:
    """Closed-segment intersection test (shared endpoints count)."""
    if segments_properly_cross(a1, a2, b1, b2):
        return True
    for p in (b1, b2):
        if _sign(orient(a1, a2, p)) == 0 and _on_closed(p, a1, a2):
            return True
    for p in (a1, a2):
        if _sign(orient(b1, b2, p)) == 0 and _on_closed(p, b1, b2):
            return True
    return False


def _on_closed(p: Point, a: Point, b: Point) -> bool:
    return (
        min(a[0], b[0]) - EPS_GEO <= p[0] <= max(a[0], b[0]) + EPS_GEO
        and min(a[1], b[1]) - EPS_GEO <= p[1] <= max(a[1], b[1]) + EPS_GEO
    )


def visible(p: Point, q: Point, mp: Multipolygon) -> bool:
    """Whether the segment pq is unobstructed by the boundaries of ``mp``.

    Blocked by a proper crossing, by passing through any vertex other than
    p and q, or by running along a boundary edge.
    """
    if p == q:
        raise GeometryError("visibility is undefined for identical points")
    for s1, s2 in mp.segments():
        if segments_properly_cross(p, q, s1, s2):
            return False
    return True


def _cross2(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _sgn(v):
    return np.where(v > EPS_GEO, 1, np.where(v < -EPS_GEO, -1, 0))


def _inside_open(pt, origin, vec, length):
    along = ((pt - origin) * vec).sum(-1) / length
    return (along > EPS_GEO) & (along < length - EPS_GEO)


def _on_closed_arr(pt, a, b):
    lo = np.minimum(a, b) - EPS_GEO
    hi = np.maximum(a, b) + EPS_GEO
    return np.all((pt >= lo) & (pt <= hi), axis=-1)


def crossing_matrix(p, q, s1, s2, touch: bool = False) -> np.ndarray:
    """Broadcast :func:`segments_properly_cross` (or, with ``touch``,
    :func:`segments_touch`) over arrays of segment endpoints."""
    pq = q - p
    sv = s2 - s1
    pq_len = np.hypot(pq[..., 0], pq[..., 1])
    s_len = np.hypot(sv[..., 0], sv[..., 1])
    o1 = _sgn(_cross2(pq, s1 - p))
    o2 = _sgn(_cross2(pq, s2 - p))
    o3 = _sgn(_cross2(sv, p - s1))
    o4 = _sgn(_cross2(sv, q - s1))
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    hit |= (o1 == 0) & _inside_open(s1, p, pq, pq_len)
    hit |= (o2 == 0) & _inside_open(s2, p, pq, pq_len)
    hit |= (o3 == 0) & _inside_open(p, s1, sv, s_len)
    hit |= (o4 == 0) & _inside_open(q, s1, sv, s_len)
    hit |= (np.all(s1 == p, -1) & np.all(s2 == q, -1)) | (np.all(s1 == q, -1) & np.all(s2 == p, -1))
    if touch:
        hit |= (o1 == 0) & _on_closed_arr(s1, p, q)
        hit |= (o2 == 0) & _on_closed_arr(s2, p, q)
        hit |= (o3 == 0) & _on_closed_arr(p, s1, s2)
        hit |= (o4 == 0) & _on_closed_arr(q, s1, s2)
    return hit


def _crossing_flat(p, q, s1, s2) -> np.ndarray:
    """:func:`crossing_matrix` for aligned (N, 2) arrays. Rows with no zero
    orientation are settled by the sign test alone."""
    pq = q - p
    sv = s2 - s1
    c1 = pq[:, 0] * (s1[:, 1] - p[:, 1]) - pq[:, 1] * (s1[:, 0] - p[:, 0])
    c2 = pq[:, 0] * (s2[:, 1] - p[:, 1]) - pq[:, 1] * (s2[:, 0] - p[:, 0])
    c3 = sv[:, 0] * (p[:, 1] - s1[:, 1]) - sv[:, 1] * (p[:, 0] - s1[:, 0])
    c4 = sv[:, 0] * (q[:, 1] - s1[:, 1]) - sv[:, 1] * (q[:, 0] - s1[:, 0])
    hit = (((c1 > EPS_GEO) & (c2 < -EPS_GEO)) | ((c1 < -EPS_GEO) & (c2 > EPS_GEO))) & \
          (((c3 > EPS_GEO) & (c4 < -EPS_GEO)) | ((c3 < -EPS_GEO) & (c4 > EPS_GEO)))
    small = np.minimum(np.minimum(np.abs(c1), np.abs(c2)), np.minimum(np.abs(c3), np.abs(c4)))
    odd = np.nonzero(small <= EPS_GEO)[0]
    if len(odd):
        hit[odd] = crossing_matrix(p[odd], q[odd], s1[odd], s2[odd])
    return hit


def visibility_matrix(a: np.ndarray, b: np.ndarray, seg_start: np.ndarray,
                      seg_end: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Vectorised ``visible`` for many candidate pairs at once.

    ``a`` and ``b`` are (P, 2) endpoint arrays; ``seg_start``/``seg_end`` are
    the (S, 2) boundary segments. Returns a boolean array of length P that
    agrees with :func:`visible` pair by pair.
    """
    out = np.ones(len(a), dtype=bool)
    if len(a) == 0 or len(seg_start) == 0:
        return out
    lo = np.minimum(seg_start, seg_end) - EPS_GEO
    hi = np.maximum(seg_start, seg_end) + EPS_GEO
    for start in range(0, len(a), chunk):
        p = a[start:start + chunk]
        q = b[start:start + chunk]
        pmin, pmax = np.minimum(p, q), np.maximum(p, q)
        # only segments whose boxes overlap the candidate can block it
        near = ((pmin[:, None, 0] <= hi[None, :, 0]) & (pmax[:, None, 0] >= lo[None, :, 0])
                & (pmin[:, None, 1] <= hi[None, :, 1]) & (pmax[:, None, 1] >= lo[None, :, 1]))
        pi, si = np.nonzero(near)
        if len(pi) == 0:
            continue
        hit = _crossing_flat(p[pi], q[pi], seg_start[si], seg_end[si])
        blocked = np.zeros(len(p), dtype=bool)
        blocked[pi[hit]] = True
        out[start:start + chunk] = ~blocked
    return out


def point_in_ring(pt: Point, ring: Sequence[Point]) -> bool:
    """Even-odd test; points on the boundary give an unspecified answer."""
    x, y = pt
    inside = False
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xint > x:
                inside = not inside
    return inside


def _ring_segments(ring: Ring) -> tuple[np.ndarray, np.ndarray]:
    xy = np.asarray(ring, dtype=float)
    return xy, np.roll(xy, -1, axis=0)


def check_simple(ring: Ring) -> None:
    """Raise SelfIntersectionError unless the ring is simple with nonzero area."""
    check_ring(ring)
    a, b = _ring_segments(ring)
    n = len(a)
    touch = crossing_matrix(a[:, None], b[:, None], a[None], b[None], touch=True)
    proper = crossing_matrix(a[:, None], b[:, None], a[None], b[None])
    idx = np.arange(n)
    adjacent = (idx[:, None] - idx[None, :]) % n
    adjacent = (adjacent == 1) | (adjacent == n - 1)
    # neighbours share a vertex, so only a fold-back overlap counts for them
    bad = np.where(adjacent, proper, touch)
    np.fill_diagonal(bad, False)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise SelfIntersectionError(f"ring edges {i} and {j} intersect")
    if abs(signed_area(ring)) <= EPS_GEO:
        raise DegenerateRingError("ring has zero area")


def _rings_touch(r1: Ring, r2: Ring) -> bool:
    a1, a2 = _ring_segments(r1)
    b1, b2 = _ring_segments(r2)
    if (a1.max(0) < b1.min(0) - EPS_GEO).any() or (b1.max(0) < a1.min(0) - EPS_GEO).any():
        return False
    return bool(crossing_matrix(a1[:, None], a2[:, None], b1[None], b2[None], touch=True).any())


def _in_solid(pt: Point, poly: Polygon) -> bool:
    return point_in_ring(pt, poly.exterior) and not any(point_in_ring(pt, h) for h in poly.holes)


def validate_polygon(poly: Polygon) -> None:
    for r in poly.rings:
        check_simple(r)
    if signed_area(poly.exterior) <= 0:
        raise GeometryError("exterior ring must be counterclockwise")
    for k, h in enumerate(poly.holes):
        if signed_area(h) >= 0:
            raise GeometryError(f"hole {k} must be clockwise")
        if _rings_touch(h, poly.exterior) or not point_in_ring(h[0], poly.exterior):
            raise NestingError(f"hole {k} is not strictly inside its exterior")
    for i in range(len(poly.holes)):
        for j in range(i + 1, len(poly.holes)):
            hi, hj = poly.holes[i], poly.holes[j]
            if _rings_touch(hi, hj) or point_in_ring(hi[0], hj) or point_in_ring(hj[0], hi):
                raise NestingError(f"holes {i} and {j} overlap")


def validate_multipolygon(mp: Multipolygon) -> None:
    """Full validation: simple rings, orientation, nesting, disjoint polygons."""
    for poly in mp.polygons:
        validate_polygon(poly)
    polys = mp.polygons
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            a, b = polys[i], polys[j]
            for ra in a.rings:
                for rb in b.rings:
                    if _rings_touch(ra, rb):
                        raise OverlapError(f"polygons {i} and {j} touch or cross")
            if _in_solid(b.exterior[0], a) or _in_solid(a.exterior[0], b):
                raise OverlapError(f"polygons {i} and {j} overlap")


def normalize_polygon(exterior, holes=()) -> Polygon:
    """Build a polygon with the exterior CCW and holes CW."""
    ext = _as_ring(exterior)
    if len(ext) >= 3 and signed_area(ext) < 0:
        ext = ext[::-1]
    out_holes = []
    for h in holes:
        h = _as_ring(h)
        if len(h) >= 3 and signed_area(h) > 0:
            h = h[::-1]
        out_holes.append(h)
    return Polygon(ext, tuple(out_holes))


def apply_transform(mp: Multipolygon, t: RigidTransform) -> Multipolygon:
    polys = []
    for poly in mp.polygons:
        ext = tuple(t.apply_point(p) for p in poly.exterior)
        holes = tuple(tuple(t.apply_point(p) for p in h) for h in poly.holes)
        polys.append(Polygon(ext, holes))
    return Multipolygon(tuple(polys))

