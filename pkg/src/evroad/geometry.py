"""Planar geometry shared by labelling, mapping and evaluation.

Road maps are sets of polygons in a local metric frame (x = easting,
y = northing). Polygons may carry holes, which is how a roundabout island is
represented. Distances and inside tests are vectorized over points because
they run once per LIDAR return or once per grid cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float  # rad, counter-clockwise from +x

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([[c, -s], [s, c]])

    def to_world(self, pts: np.ndarray) -> np.ndarray:
        """Local (sensor-frame) xy -> world xy."""
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation().T + np.array([self.x, self.y])

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return (pts - np.array([self.x, self.y])) @ self.rotation()


@dataclass(frozen=True)
class RigidMotion2D:
    """p' = R(angle) p + (tx, ty)."""

    angle: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s, self.tx], [s, c, self.ty], [0.0, 0.0, 1.0]])

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        c, s = math.cos(self.angle), math.sin(self.angle)
        out = np.empty_like(pts)
        out[..., 0] = c * pts[..., 0] - s * pts[..., 1] + self.tx
        out[..., 1] = s * pts[..., 0] + c * pts[..., 1] + self.ty
        return out

    def inverse(self) -> "RigidMotion2D":
        c, s = math.cos(self.angle), math.sin(self.angle)
        return RigidMotion2D(-self.angle, -(c * self.tx + s * self.ty), s * self.tx - c * self.ty)

    def compose(self, other: "RigidMotion2D") -> "RigidMotion2D":
        """self after other."""
        t = self.apply(np.array([other.tx, other.ty]))
        return RigidMotion2D(self.angle + other.angle, float(t[0]), float(t[1]))

    @classmethod
    def between(cls, prev: Pose2D, cur: Pose2D) -> "RigidMotion2D":
        """Motion mapping coordinates in the ``prev`` body frame to the ``cur`` body frame."""
        d = cur.to_local(np.array([[prev.x, prev.y]]))[0]
        return cls(prev.heading - cur.heading, float(d[0]), float(d[1]))


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


@dataclass
class Polygon:
    exterior: np.ndarray  # (n, 2), not closed
    holes: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.exterior = _open_ring(self.exterior)
        self.holes = [_open_ring(h) for h in self.holes]
        for ring in [self.exterior, *self.holes]:
            if len(ring) < 3:
                raise ValueError("polygon rings need at least 3 vertices")

    def rings(self) -> list[np.ndarray]:
        return [self.exterior, *self.holes]


def _open_ring(ring) -> np.ndarray:
    ring = np.asarray(ring, dtype=float).reshape(-1, 2)
    if len(ring) > 1 and np.allclose(ring[0], ring[-1]):
        ring = ring[:-1]
    return ring


@dataclass
class VectorMap:
    """Road surfaces as non-overlapping polygons around a local origin.

    Overlapping inputs should go through :meth:`merged` first, otherwise the
    shared interior boundaries would count as road edges.
    """

    polygons: list[Polygon]
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self._segments = None

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        if self._segments is None:
            starts, ends = [], []
            for poly in self.polygons:
                for ring in poly.rings():
                    starts.append(ring)
                    ends.append(np.roll(ring, -1, axis=0))
            if starts:
                self._segments = (np.concatenate(starts), np.concatenate(ends))
            else:
                self._segments = (np.zeros((0, 2)), np.zeros((0, 2)))
        return self._segments

    def is_empty(self) -> bool:
        return not self.polygons

    @classmethod
    def merged(cls, shapes, origin=(0.0, 0.0)) -> "VectorMap":
        """Union of shapely geometries turned into a map of disjoint polygons."""
        from shapely.ops import unary_union

        geom = unary_union(list(shapes))
        parts = getattr(geom, "geoms", [geom])
        polys = []
        for g in parts:
            if g.is_empty or g.geom_type != "Polygon":
                continue
            polys.append(Polygon(np.asarray(g.exterior.coords), [np.asarray(h.coords) for h in g.interiors]))
        return cls(polys, origin)

    def to_shapely(self):
        from shapely.geometry import MultiPolygon
        from shapely.geometry import Polygon as SPolygon

        return MultiPolygon([SPolygon(p.exterior, [h for h in p.holes]) for p in self.polygons])


def points_in_map(pts: np.ndarray, vmap: VectorMap, chunk: int = 8192) -> np.ndarray:
    """Even-odd inside test against every ring of every polygon (holes flip parity)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    inside = np.zeros(len(pts), dtype=bool)
    for poly in vmap.polygons:
        parity = np.zeros(len(pts), dtype=bool)
        for ring in poly.rings():
            a, b = ring, np.roll(ring, -1, axis=0)
            for lo in range(0, len(pts), chunk):
                parity[lo:lo + chunk] ^= _crossings_odd(pts[lo:lo + chunk], a, b)
        inside |= parity
    return inside


def _crossings_odd(pts, a, b) -> np.ndarray:
    px = pts[:, 0:1]
    py = pts[:, 1:2]
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    straddle = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
    hits = straddle & (px < x_cross)
    return (hits.sum(axis=1) % 2).astype(bool)


def distance_to_edges(pts: np.ndarray, vmap: VectorMap, chunk: int = 4096) -> np.ndarray:
    """Minimum Euclidean distance from each point to any polygon boundary segment."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    a, b = vmap.segments()
    if len(a) == 0:
        raise ValueError("map has no road edges")
    ab = b - a
    len2 = np.einsum("ij,ij->i", ab, ab)
    len2 = np.where(len2 > 0, len2, 1.0)
    out = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        p = pts[lo:lo + chunk, None, :]
        ap = p - a[None]
        t = np.clip(np.einsum("nsk,sk->ns", ap, ab) / len2, 0.0, 1.0)
        d = ap - t[..., None] * ab[None]
        out[lo:lo + chunk] = np.sqrt(np.min(np.einsum("nsk,nsk->ns", d, d), axis=1))
    return out


def distance_to_road_edge(p, vmap: VectorMap) -> tuple[float, bool]:
    """(distance to the nearest road edge, whether ``p`` lies on a mapped road)."""
    if vmap.is_empty():
        raise ValueError("empty vector map")
    pt = np.asarray(p, dtype=float).reshape(1, 2)
    d = float(distance_to_edges(pt, vmap)[0])
    inside = bool(points_in_map(pt, vmap)[0]) or d == 0.0
    return d, inside
