"""Areal units, study areas, contiguity and indexed coverage queries."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import ValidationError
from .geometry import (
    Point,
    PolygonSet,
    disc_edge_terms,
    polygon_area,
    polygon_centroid,
)

__all__ = [
    "ArealUnit",
    "SpatialIndex",
    "StudyArea",
    "build_adjacency",
    "observed_coverage",
    "coverage_matrices",
]


@dataclass(frozen=True, eq=False)
class ArealUnit:
    id: Hashable
    geometry: PolygonSet
    centroid: Point
    area: float

    @classmethod
    def from_geometry(cls, uid, geometry: PolygonSet) -> "ArealUnit":
        area = polygon_area(geometry)
        if not area > 0:
            raise ValidationError(f"unit {uid!r} has zero area")
        return cls(uid, geometry, polygon_centroid(geometry), area)


class SpatialIndex:
    """Bounding-box index: a KD-tree over box centres plus an exact box filter."""

    def __init__(self, bboxes: np.ndarray):
        self.bboxes = np.asarray(bboxes, dtype=float)
        centres = 0.5 * (self.bboxes[:, :2] + self.bboxes[:, 2:])
        half = 0.5 * (self.bboxes[:, 2:] - self.bboxes[:, :2])
        self._reach = float(np.hypot(half[:, 0], half[:, 1]).max())
        self._tree = cKDTree(centres)

    def query_disc(self, center, r: float) -> np.ndarray:
        """Indices of boxes within distance ``r`` of ``center``, ascending."""
        cand = np.asarray(self._tree.query_ball_point(center, r + self._reach), dtype=np.intp)
        if cand.size == 0:
            return cand
        b = self.bboxes[cand]
        dx = np.maximum(np.maximum(b[:, 0] - center[0], center[0] - b[:, 2]), 0.0)
        dy = np.maximum(np.maximum(b[:, 1] - center[1], center[1] - b[:, 3]), 0.0)
        return np.sort(cand[dx * dx + dy * dy <= r * r])

    def overlapping_pairs(self, tol: float) -> np.ndarray:
        """All index pairs (i < j) whose boxes, grown by ``tol``, overlap."""
        pairs = self._tree.query_pairs(2.0 * self._reach + tol, output_type="ndarray")
        if len(pairs) == 0:
            return pairs.reshape(0, 2)
        a = self.bboxes[pairs[:, 0]]
        b = self.bboxes[pairs[:, 1]]
        ok = (
            (a[:, 0] <= b[:, 2] + tol)
            & (b[:, 0] <= a[:, 2] + tol)
            & (a[:, 1] <= b[:, 3] + tol)
            & (b[:, 1] <= a[:, 3] + tol)
        )
        pairs = pairs[ok]
        return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


class StudyArea:
    """A partition of a region into areal units.

    Units are assumed interior-disjoint, so the area of any union of units
    is the sum of their areas.  Instances are immutable after construction.
    """

    def __init__(
        self,
        units: Sequence[ArealUnit],
        *,
        adjacency=None,
        contiguity: str = "rook",
        tol: float | None = None,
        footprint: PolygonSet | None = None,
        validate: bool = True,
    ):
        if len(units) < 1:
            raise ValidationError("study area needs at least one unit")
        self.units = tuple(units)
        self.centroids = np.array([u.centroid for u in self.units], dtype=float)
        self.areas = np.array([u.area for u in self.units], dtype=float)
        self.total_area = float(self.areas.sum())

        edges = [u.geometry.edges for u in self.units]
        self.edge_start = np.concatenate([[0], np.cumsum([len(e) for e in edges])])
        self.edges = np.vstack(edges)
        self.unit_bboxes = np.array([u.geometry.bounds for u in self.units], dtype=float)
        self.bbox = (
            float(self.unit_bboxes[:, 0].min()),
            float(self.unit_bboxes[:, 1].min()),
            float(self.unit_bboxes[:, 2].max()),
            float(self.unit_bboxes[:, 3].max()),
        )
        self.diagonal = math.hypot(self.bbox[2] - self.bbox[0], self.bbox[3] - self.bbox[1])
        self.tol = 1e-9 * self.diagonal if tol is None else float(tol)
        self.index = SpatialIndex(self.unit_bboxes)
        self._cache: dict = {}

        if validate:
            validate_disjoint(self)
        self.footprint = footprint if footprint is not None else _union_footprint(self.units)
        if validate:
            fa = polygon_area(self.footprint)
            if abs(fa - self.total_area) > 1e-6 * self.total_area:
                raise ValidationError(
                    f"unit areas sum to {self.total_area:.12g} but their union covers "
                    f"{fa:.12g}; units overlap"
                )
        if adjacency is None:
            adjacency = build_adjacency(self, contiguity, self.tol)
        self.adjacency = tuple(tuple(int(j) for j in nb) for nb in adjacency)
        self.contiguity = contiguity

    @property
    def n_units(self) -> int:
        return len(self.units)

    def __len__(self):
        return len(self.units)

    def unit_edges(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Edges of the given units concatenated, with each unit's start offset."""
        idx = np.asarray(idx, dtype=np.intp)
        starts = self.edge_start[idx]
        counts = self.edge_start[idx + 1] - starts
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        flat = np.repeat(starts - offsets, counts) + np.arange(counts.sum())
        return self.edges[flat], offsets

    @property
    def fingerprint(self) -> str:
        fp = self._cache.get("fingerprint")
        if fp is None:
            h = hashlib.sha256()
            h.update(np.ascontiguousarray(self.edges).tobytes())
            h.update(self.edge_start.astype(np.int64).tobytes())
            h.update(repr([u.id for u in self.units]).encode())
            fp = h.hexdigest()
            self._cache["fingerprint"] = fp
        return fp

    def adjacency_matrix(self, rule: str | None = None) -> sparse.csr_matrix:
        """Sparse 0/1 neighbour matrix; ``rule`` other than the study area's own
        contiguity rebuilds the neighbour lists under that rule (cached)."""
        rule = self.contiguity if rule is None else rule
        key = ("adjacency", rule)
        a = self._cache.get(key)
        if a is None:
            nbrs = self.adjacency if rule == self.contiguity else build_adjacency(self, rule, self.tol)
            rows = [i for i, nb in enumerate(nbrs) for _ in nb]
            cols = [j for nb in nbrs for j in nb]
            n = self.n_units
            a = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            self._cache[key] = a
        return a


def _union_footprint(units) -> PolygonSet:
    from shapely.geometry import shape
    from shapely.ops import unary_union

    merged = unary_union([shape(u.geometry.to_geojson()) for u in units])
    polys = getattr(merged, "geoms", [merged])
    parts = []
    for p in polys:
        if p.is_empty or p.area <= 0:
            continue
        parts.append((list(p.exterior.coords), [list(h.coords) for h in p.interiors]))
    return PolygonSet.from_parts(parts)


def validate_disjoint(sa: StudyArea, max_pairs: int = 2000, rel_tol: float = 1e-6, seed: int = 0):
    """Reject study areas whose units overlap (checked on a sample of candidate pairs)."""
    from shapely.geometry import shape

    pairs = sa.index.overlapping_pairs(0.0)
    if len(pairs) == 0:
        return
    if len(pairs) > max_pairs:
        pick = np.random.default_rng(seed).choice(len(pairs), max_pairs, replace=False)
        pairs = pairs[np.sort(pick)]
    shapes = {}

    def get(i):
        if i not in shapes:
            shapes[i] = shape(sa.units[i].geometry.to_geojson())
        return shapes[i]

    for i, j in pairs:
        inter = get(i).intersection(get(j)).area
        if inter > rel_tol * min(sa.areas[i], sa.areas[j]):
            raise ValidationError(
                f"units {sa.units[i].id!r} and {sa.units[j].id!r} overlap (area {inter:.6g})"
            )


def _clip_box(e: np.ndarray, box, tol) -> np.ndarray:
    xmin, ymin, xmax, ymax = box
    keep = (
        (np.maximum(e[:, 0], e[:, 2]) >= xmin - tol)
        & (np.minimum(e[:, 0], e[:, 2]) <= xmax + tol)
        & (np.maximum(e[:, 1], e[:, 3]) >= ymin - tol)
        & (np.minimum(e[:, 1], e[:, 3]) <= ymax + tol)
    )
    return e[keep]


def _shared_length(ea: np.ndarray, eb: np.ndarray, tol: float) -> float:
    """Total length over which edges of ``ea`` and ``eb`` run along each other."""
    p = ea[:, None, :2]
    d = ea[:, None, 2:] - p
    length = np.hypot(d[..., 0], d[..., 1])
    u = d / np.where(length > 0, length, 1.0)[..., None]
    q0 = eb[None, :, :2] - p
    q1 = eb[None, :, 2:] - p
    off0 = np.abs(u[..., 0] * q0[..., 1] - u[..., 1] * q0[..., 0])
    off1 = np.abs(u[..., 0] * q1[..., 1] - u[..., 1] * q1[..., 0])
    s0 = u[..., 0] * q0[..., 0] + u[..., 1] * q0[..., 1]
    s1 = u[..., 0] * q1[..., 0] + u[..., 1] * q1[..., 1]
    lo = np.maximum(np.minimum(s0, s1), 0.0)
    hi = np.minimum(np.maximum(s0, s1), length)
    overlap = np.where((off0 <= tol) & (off1 <= tol), np.maximum(hi - lo, 0.0), 0.0)
    return float(overlap.sum())


def _point_segment_dist(pts: np.ndarray, segs: np.ndarray) -> np.ndarray:
    p = pts[:, None, :]
    a = segs[None, :, :2]
    d = segs[None, :, 2:] - a
    dd = np.sum(d * d, axis=-1)
    t = np.clip(np.sum((p - a) * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
    diff = p - (a + t[..., None] * d)
    return np.hypot(diff[..., 0], diff[..., 1])


def _min_boundary_dist(ea: np.ndarray, eb: np.ndarray) -> float:
    da = _point_segment_dist(ea[:, :2], eb).min()
    db = _point_segment_dist(eb[:, :2], ea).min()
    return float(min(da, db))


def build_adjacency(sa: StudyArea, rule: str = "rook", tol: float | None = None):
    """Symmetric neighbour lists under rook or queen contiguity.

    Rook: the units share boundary of total length greater than ``tol``.
    Queen: some boundary points of the two units lie within ``tol``.
    """
    if rule not in ("rook", "queen"):
        raise ValidationError(f"unknown contiguity rule {rule!r}; use 'rook' or 'queen'")
    tol = sa.tol if tol is None else tol
    nbrs: list[set] = [set() for _ in range(sa.n_units)]
    for i, j in sa.index.overlapping_pairs(tol):
        bi, bj = sa.unit_bboxes[i], sa.unit_bboxes[j]
        box = (max(bi[0], bj[0]), max(bi[1], bj[1]), min(bi[2], bj[2]), min(bi[3], bj[3]))
        ea = _clip_box(sa.unit_edges([i])[0], box, tol)
        eb = _clip_box(sa.unit_edges([j])[0], box, tol)
        if len(ea) == 0 or len(eb) == 0:
            continue
        if rule == "rook":
            touching = _shared_length(ea, eb, tol) > tol
        else:
            touching = _min_boundary_dist(ea, eb) <= tol
        if touching:
            nbrs[i].add(int(j))
            nbrs[j].add(int(i))
    return [sorted(s) for s in nbrs]


def observed_coverage(sa: StudyArea, y, center, r: float) -> float:
    """Area within ``r`` of ``center`` that lies in observed units."""
    if not r > 0:
        raise ValidationError("radius must be positive")
    y = np.asarray(y)
    if y.shape != (sa.n_units,):
        raise ValidationError(f"pattern length {y.shape} does not match {sa.n_units} units")
    cand = sa.index.query_disc(center, r)
    cand = cand[y[cand] != 0]
    if cand.size == 0:
        return 0.0
    edges, _ = sa.unit_edges(cand)
    area = float(disc_edge_terms(edges, center, [r]).sum()) * r * r
    return min(max(area, 0.0), math.pi * r * r)


def coverage_matrices(sa: StudyArea, radii) -> list[sparse.csr_matrix]:
    """Per radius, the sparse N×N matrix of ``|disc(c_i, r) ∩ a_j| / (π r²)``.

    Row ``i`` dotted with a binary pattern gives the observed fraction of
    the disc about unit ``i``'s centroid.  Results are cached per radius grid.
    """
    radii = np.asarray(radii, dtype=float)
    key = ("coverage", radii.tobytes())
    hit = sa._cache.get(key)
    if hit is not None:
        return hit
    n = sa.n_units
    rmax = float(radii.max())
    rows, cols, vals = [], [], []
    for i in range(n):
        c = sa.centroids[i]
        cand = sa.index.query_disc(c, rmax)
        edges, offsets = sa.unit_edges(cand)
        terms = disc_edge_terms(edges, c, radii)
        frac = np.add.reduceat(terms, offsets, axis=1) / math.pi
        rows.append(np.full(cand.size, i))
        cols.append(cand)
        vals.append(np.clip(frac, 0.0, 1.0))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals, axis=1)
    out = []
    for k in range(len(radii)):
        v = vals[k]
        keep = v > 1e-15
        out.append(
            sparse.csr_matrix((v[keep], (rows[keep], cols[keep])), shape=(n, n))
        )
    sa._cache[key] = out
    return out
