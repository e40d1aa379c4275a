"""Planar geometry kernel.

Polygons are stored as ring arrays with exterior rings counterclockwise and
holes clockwise, so every signed edge sum (shoelace, centroid moments, the
Green's-theorem disc clipping below) handles holes without special cases.

The disc/polygon kernel works edge by edge: for a disc of radius ``r`` at
``c``, each directed edge ``pq`` contributes the signed area of
``disc ∩ triangle(c, p, q)``.  Inside the disc that is the triangle area of
the clipped chord; outside it is the circular sector ``r² θ / 2`` swept by
the edge.  Summing over all rings gives the exact intersection area.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "Point",
    "PolygonSet",
    "polygon_area",
    "polygon_centroid",
    "disc_polygon_intersection_area",
    "disc_edge_terms",
    "contains_points",
    "arc_fraction_inside",
    "arc_fractions",
]

TWO_PI = 2.0 * math.pi


class Point(NamedTuple):
    x: float
    y: float


def _ring_signed_area(ring: np.ndarray) -> float:
    x = ring[:, 0] - ring[:, 0].mean()
    y = ring[:, 1] - ring[:, 1].mean()
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _normalize_ring(coords, *, hole: bool) -> np.ndarray:
    ring = np.asarray(coords, dtype=float)
    if ring.ndim != 2 or ring.shape[1] < 2:
        raise ValidationError("ring must be a sequence of (x, y) pairs")
    ring = ring[:, :2]
    if not np.all(np.isfinite(ring)):
        raise ValidationError("ring has non-finite coordinates")
    # drop repeated consecutive vertices, including the closing vertex
    keep = np.any(ring != np.roll(ring, 1, axis=0), axis=1)
    if len(ring) > 0 and not keep.any():
        keep[0] = True
    ring = ring[keep]
    if len(np.unique(ring, axis=0)) < 3:
        raise ValidationError("degenerate ring: fewer than 3 distinct vertices")
    area = _ring_signed_area(ring)
    if area == 0.0:
        raise ValidationError("degenerate ring: zero area")
    if (area < 0) != hole:
        ring = ring[::-1]
    return np.ascontiguousarray(ring)


@dataclass(frozen=True, eq=False)
class PolygonSet:
    """One or more polygons with holes.

    ``parts`` is a tuple of ``(exterior, holes)`` pairs of normalized ring
    arrays. Build instances with :meth:`from_parts` or :meth:`from_geojson`.
    """

    parts: tuple
    edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rings = [r for ext, holes in self.parts for r in (ext, *holes)]
        if not rings:
            raise ValidationError("polygon set has no parts")
        segs = [np.hstack([r, np.roll(r, -1, axis=0)]) for r in rings]
        object.__setattr__(self, "edges", np.ascontiguousarray(np.vstack(segs)))

    @classmethod
    def from_parts(cls, parts) -> "PolygonSet":
        """``parts`` is a list of ``(exterior, [hole, ...])`` coordinate sequences."""
        norm = []
        for ext, holes in parts:
            norm.append(
                (
                    _normalize_ring(ext, hole=False),
                    tuple(_normalize_ring(h, hole=True) for h in holes),
                )
            )
        return cls(tuple(norm))

    @classmethod
    def from_coords(cls, exterior, holes=()) -> "PolygonSet":
        return cls.from_parts([(exterior, list(holes))])

    @classmethod
    def from_geojson(cls, geom: dict) -> "PolygonSet":
        kind = geom.get("type")
        coords = geom.get("coordinates")
        if kind == "Polygon":
            polys = [coords]
        elif kind == "MultiPolygon":
            polys = coords
        else:
            raise ValidationError(f"unsupported geometry type {kind!r}")
        if not polys:
            raise ValidationError("empty geometry")
        return cls.from_parts([(p[0], p[1:]) for p in polys])

    @classmethod
    def box(cls, xmin, ymin, xmax, ymax) -> "PolygonSet":
        return cls.from_coords(
            [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
        )

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        pts = self.edges[:, :2]
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def to_geojson(self) -> dict:
        def ring(r):
            closed = np.vstack([r, r[:1]])
            return closed.tolist()

        polys = [[ring(ext)] + [ring(h) for h in holes] for ext, holes in self.parts]
        if len(polys) == 1:
            return {"type": "Polygon", "coordinates": polys[0]}
        return {"type": "MultiPolygon", "coordinates": polys}

    def translated(self, dx: float, dy: float) -> "PolygonSet":
        return self.transformed(np.eye(2), (dx, dy))

    def transformed(self, matrix, offset=(0.0, 0.0)) -> "PolygonSet":
        """Apply ``p -> matrix @ p + offset`` to every vertex."""
        m = np.asarray(matrix, dtype=float)
        off = np.asarray(offset, dtype=float)

        def tf(r):
            return r @ m.T + off

        return PolygonSet.from_parts(
            [(tf(ext), [tf(h) for h in holes]) for ext, holes in self.parts]
        )


def _moments(g: PolygonSet) -> tuple[float, float, float]:
    """Signed area and first moments, computed about the bbox centre."""
    e = g.edges
    xmin, ymin, xmax, ymax = g.bounds
    ox, oy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
    x0, y0 = e[:, 0] - ox, e[:, 1] - oy
    x1, y1 = e[:, 2] - ox, e[:, 3] - oy
    cross = x0 * y1 - x1 * y0
    a = 0.5 * cross.sum()
    mx = ((x0 + x1) * cross).sum() / 6.0
    my = ((y0 + y1) * cross).sum() / 6.0
    return a, mx + a * ox, my + a * oy


def polygon_area(g: PolygonSet) -> float:
    """Area of the exteriors minus the holes."""
    return max(_moments(g)[0], 0.0)


def polygon_centroid(g: PolygonSet) -> Point:
    a, mx, my = _moments(g)
    if not a > 0:
        raise ValidationError("centroid undefined for zero-area geometry")
    return Point(float(mx / a), float(my / a))


def _sector(ux, uy, vx, vy):
    return 0.5 * np.arctan2(ux * vy - uy * vx, ux * vx + uy * vy)


def _unit_disc_terms(ax, ay, bx, by):
    """Signed area of unit disc ∩ triangle(0, a, b), elementwise."""
    dx = bx - ax
    dy = by - ay
    a = dx * dx + dy * dy
    half_b = ax * dx + ay * dy
    c = ax * ax + ay * ay - 1.0
    disc = half_b * half_b - a * c
    hit = (disc > 0.0) & (a > 0.0)
    root = np.sqrt(np.where(hit, disc, 0.0))
    a_safe = np.where(a > 0.0, a, 1.0)
    t0 = np.where(hit, np.clip((-half_b - root) / a_safe, 0.0, 1.0), 0.0)
    t1 = np.where(hit, np.clip((-half_b + root) / a_safe, 0.0, 1.0), 0.0)
    p0x, p0y = ax + t0 * dx, ay + t0 * dy
    p1x, p1y = ax + t1 * dx, ay + t1 * dy
    return (
        _sector(ax, ay, p0x, p0y)
        + 0.5 * (p0x * p1y - p0y * p1x)
        + _sector(p1x, p1y, bx, by)
    )


def disc_edge_terms(edges: np.ndarray, center, radii) -> np.ndarray:
    """Per-edge Green's terms for discs of several radii at one centre.

    Returns an array of shape ``(len(radii), len(edges))`` whose entries are
    the edge contributions to ``|disc ∩ polygon| / r²``.  Summing a ring
    group along the last axis and multiplying by ``r²`` gives the area.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))[:, None]
    cx, cy = center
    ax = (edges[:, 0] - cx) / radii
    ay = (edges[:, 1] - cy) / radii
    bx = (edges[:, 2] - cx) / radii
    by = (edges[:, 3] - cy) / radii
    return _unit_disc_terms(ax, ay, bx, by)


def disc_polygon_intersection_area(center, r: float, g: PolygonSet) -> float:
    """Exact area of the disc of radius ``r`` at ``center`` intersected with ``g``."""
    if not r > 0:
        raise ValidationError("radius must be positive")
    area = float(disc_edge_terms(g.edges, center, [r]).sum()) * r * r
    return min(max(area, 0.0), math.pi * r * r)


def contains_points(edges: np.ndarray, pts) -> np.ndarray:
    """Even-odd containment of ``pts`` (k, 2) in the polygon given by its edge soup."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    px = pts[:, 0, None]
    py = pts[:, 1, None]
    x0, y0, x1, y1 = edges[:, 0], edges[:, 1], edges[:, 2], edges[:, 3]
    straddle = (y0 > py) != (y1 > py)
    dy = np.where(y1 == y0, 1.0, y1 - y0)
    xcross = x0 + (py - y0) * (x1 - x0) / dy
    hits = straddle & (px < xcross)
    return (hits.sum(axis=1) % 2) == 1


def _circle_crossing_angles(edges, cx, cy, r):
    """Angles (k, 2E) where circles (cx, cy, r) cross each edge; NaN where none."""
    ex0 = edges[None, :, 0] - cx[:, None]
    ey0 = edges[None, :, 1] - cy[:, None]
    dx = (edges[:, 2] - edges[:, 0])[None, :]
    dy = (edges[:, 3] - edges[:, 1])[None, :]
    a = dx * dx + dy * dy
    half_b = ex0 * dx + ey0 * dy
    c = ex0 * ex0 + ey0 * ey0 - (r * r)[:, None]
    disc = half_b * half_b - a * c
    ok = (disc >= 0.0) & (a > 0.0)
    root = np.sqrt(np.where(ok, disc, 0.0))
    a_safe = np.where(a > 0.0, a, 1.0)
    out = []
    for t in ((-half_b - root) / a_safe, (-half_b + root) / a_safe):
        valid = ok & (t >= 0.0) & (t <= 1.0)
        ang = np.arctan2(ey0 + t * dy, ex0 + t * dx) % TWO_PI
        out.append(np.where(valid, ang, np.nan))
    return np.concatenate(out, axis=1)


def _as_rectangle(g: PolygonSet):
    """Bounds of ``g`` if it is a single axis-aligned rectangle, else None."""
    if len(g.parts) != 1 or g.parts[0][1] or len(g.edges) != 4:
        return None
    e = g.edges
    if not np.all((e[:, 0] == e[:, 2]) | (e[:, 1] == e[:, 3])):
        return None
    return g.bounds


def _rectangle_arc_fractions(centers, radii, box):
    # each side clips an arc of half-angle acos(d/r) about its outward normal;
    # arcs of adjacent sides overlap when the corner is inside the circle
    xmin, ymin, xmax, ymax = box
    d = np.column_stack(
        [xmax - centers[:, 0], centers[:, 1] - ymin, centers[:, 0] - xmin, ymax - centers[:, 1]]
    )
    ratio = np.clip(d / radii[:, None], 0.0, 1.0)
    half = np.arccos(ratio)
    pair = half + np.roll(half, -1, axis=1) - 0.5 * math.pi
    outside = 2.0 * half.sum(axis=1) - np.clip(pair, 0.0, None).sum(axis=1)
    return 1.0 - outside / TWO_PI


def arc_fractions(centers, radii, g: PolygonSet, *, chunk_elems: int = 4_000_000):
    """Fraction of each circle's circumference lying inside ``g``.

    ``centers`` is (k, 2) and ``radii`` is (k,).  Crossing angles with every
    boundary edge are sorted; each arc between consecutive crossings is
    classified by whether its midpoint lies inside ``g``.  Rectangular
    windows with every centre inside use a closed form.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
    box = _as_rectangle(g)
    if box is not None:
        inside = (
            (centers[:, 0] >= box[0]) & (centers[:, 0] <= box[2])
            & (centers[:, 1] >= box[1]) & (centers[:, 1] <= box[3])
        )
        if inside.all():
            return _rectangle_arc_fractions(centers, radii, box)
    edges = g.edges
    n_edges = len(edges)
    out = np.empty(len(centers))
    step = max(1, chunk_elems // (2 * n_edges * max(n_edges, 8)))
    for lo in range(0, len(centers), step):
        hi = min(lo + step, len(centers))
        cx, cy, r = centers[lo:hi, 0], centers[lo:hi, 1], radii[lo:hi]
        ang = np.sort(_circle_crossing_angles(edges, cx, cy, r), axis=1)
        count = np.sum(~np.isnan(ang), axis=1)
        k = ang.shape[1]
        idx = np.arange(k)[None, :]
        # successor of each valid angle, wrapping the last onto the first + 2π
        nxt = np.where(idx + 1 < count[:, None], np.roll(ang, -1, axis=1), ang[:, :1] + TWO_PI)
        span = np.where(idx < count[:, None], nxt - ang, 0.0)
        mid = ang + 0.5 * span
        mx = cx[:, None] + r[:, None] * np.cos(mid)
        my = cy[:, None] + r[:, None] * np.sin(mid)
        inside = contains_points(edges, np.column_stack([mx.ravel(), my.ravel()]))
        inside = inside.reshape(mid.shape)
        frac = np.sum(np.where(inside, span, 0.0), axis=1) / TWO_PI
        # circles with no crossing are wholly inside or wholly outside
        none = count == 0
        if none.any():
            probe = np.column_stack([cx[none] + r[none], cy[none]])
            frac[none] = contains_points(edges, probe).astype(float)
        out[lo:hi] = frac
    return out


def arc_fraction_inside(center, r: float, g: PolygonSet) -> float:
    """Fraction of the radius-``r`` circle about ``center`` that lies inside ``g``."""
    if not r > 0:
        raise ValidationError("radius must be positive")
    if not contains_points(g.edges, [center])[0]:
        raise ValidationError("circle centre lies outside the window")
    return float(arc_fractions([center], [r], g)[0])
