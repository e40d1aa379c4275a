"""Point-process baselines applied to unit centroids.

* Ripley's K with Ripley's isotropic edge correction and a pointwise
  simulation envelope under a binomial process in the study window.
* Clark-Evans average nearest neighbour test (no edge correction).
* Bernoulli spatial scan statistic: every unit has population 1, zones are
  circles about unit centroids, membership by centroid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import IncompatibleNullError, UndefinedStatisticError, ValidationError
from .geometry import PolygonSet, arc_fractions, contains_points, polygon_area
from .sampling import RngStream, _gen, swor
from .statistic import ALTERNATIVES, as_radii
from .study import StudyArea

log = logging.getLogger(__name__)

__all__ = [
    "PointPattern",
    "centroid_pattern",
    "binomial_process",
    "k_hat",
    "KResult",
    "k_envelope_test",
    "AnnResult",
    "ann_test",
    "scan_zones",
    "zone_llr",
    "ScanNull",
    "scan_null",
    "ScanResult",
    "scan_test",
]

# relative slack for deciding that a distance equals a radius
_DIST_EPS = 1e-12
CLARK_EVANS_MEAN = 0.5
CLARK_EVANS_SE = 0.26136


@dataclass(frozen=True, eq=False)
class PointPattern:
    points: np.ndarray
    window: PolygonSet
    area: float

    @property
    def n(self) -> int:
        return len(self.points)


def centroid_pattern(sa: StudyArea, y) -> PointPattern:
    """Centroids of the observed units, in the study-area window."""
    y = np.asarray(y)
    idx = np.flatnonzero(y)
    if idx.size == 0:
        raise UndefinedStatisticError("no observed units")
    return PointPattern(sa.centroids[idx].copy(), sa.footprint, sa.total_area)


def binomial_process(window: PolygonSet, n: int, rng) -> np.ndarray:
    """``n`` independent uniform points in ``window`` (rejection from its bbox)."""
    g = _gen(rng)
    xmin, ymin, xmax, ymax = window.bounds
    frac = polygon_area(window) / ((xmax - xmin) * (ymax - ymin))
    out = []
    have = 0
    while have < n:
        m = int((n - have) / frac * 1.2) + 16
        pts = np.column_stack([g.uniform(xmin, xmax, m), g.uniform(ymin, ymax, m)])
        pts = pts[contains_points(window.edges, pts)]
        out.append(pts)
        have += len(pts)
    return np.vstack(out)[:n]


def _k_curve(points, radii, window, area, correction, closed=False):
    n = len(points)
    rmax = float(radii[-1]) * (1 + _DIST_EPS)
    pairs = cKDTree(points).query_pairs(rmax, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros(len(radii))
    i = np.concatenate([pairs[:, 0], pairs[:, 1]])
    j = np.concatenate([pairs[:, 1], pairs[:, 0]])
    d = np.hypot(*(points[i] - points[j]).T)
    w = np.ones(len(d))
    if correction == "isotropic":
        inside = contains_points(window.edges, points)
        if not inside.all():
            log.warning(
                "%d point(s) fall outside the window; their isotropic weights default to 1",
                int((~inside).sum()),
            )
        ok = inside[i]
        frac = arc_fractions(points[i[ok]], d[ok], window)
        w[ok] = 1.0 / np.maximum(frac, 1e-12)
    elif correction != "none":
        raise ValidationError(f"unknown edge correction {correction!r}")
    order = np.argsort(d, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(w[order])])
    if closed:
        pos = np.searchsorted(d[order], radii * (1 + _DIST_EPS), side="right")
    else:
        pos = np.searchsorted(d[order], radii * (1 - _DIST_EPS), side="left")
    return area * cum[pos] / (n * n)


def k_hat(pp: PointPattern, r, correction: str = "isotropic", closed: bool = False):
    """Estimate of Ripley's K: ``|A| / n² · Σ_i Σ_{j≠i} w_ij 1[d_ij < r]``.

    With ``correction="isotropic"`` each pair is weighted by the reciprocal
    of the fraction of the circle about point ``i`` through point ``j``
    that lies inside the window.  Pairs at distance exactly ``r`` (up to
    round-off) are left out unless ``closed=True``; on lattices this
    decides whether the nearest-neighbour shell counts at ``r`` equal to
    the spacing.
    """
    scalar = np.ndim(r) == 0
    radii = as_radii(r)
    if pp.n < 2:
        raise UndefinedStatisticError("K needs at least two points")
    out = _k_curve(pp.points, radii, pp.window, pp.area, correction, closed)
    return float(out[0]) if scalar else out


@dataclass
class KResult:
    radii: np.ndarray
    k_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    reject: np.ndarray
    alternative: str

    @property
    def l_hat(self) -> np.ndarray:
        return np.sqrt(self.k_hat / math.pi)


def k_envelope_test(
    pp: PointPattern,
    radii,
    nsim: int = 100,
    seed=0,
    alternative: str = "two-sided",
    alpha: float = 0.05,
    correction: str = "isotropic",
    closed: bool = False,
) -> KResult:
    """Pointwise min/max envelope test of K against a binomial process."""
    radii = as_radii(radii)
    if alternative not in ALTERNATIVES:
        raise ValidationError(f"alternative must be one of {ALTERNATIVES}")
    tails = 2 if alternative == "two-sided" else 1
    if nsim < tails / alpha - 1 - 1e-9:
        raise ValidationError(f"nsim={nsim} too small for a level-{alpha} envelope")
    base = seed if isinstance(seed, RngStream) else RngStream(seed)
    obs = _k_curve(pp.points, radii, pp.window, pp.area, correction, closed)
    sims = np.empty((nsim, len(radii)))
    for s in range(nsim):
        pts = binomial_process(pp.window, pp.n, base.child(s))
        sims[s] = _k_curve(pts, radii, pp.window, pp.area, correction, closed)
    lo = sims.min(axis=0)
    hi = sims.max(axis=0)
    reject = np.zeros(len(radii), dtype=bool)
    if alternative in ("clustering", "two-sided"):
        reject |= obs > hi
    if alternative in ("dispersion", "two-sided"):
        reject |= obs < lo
    return KResult(radii, obs, lo, hi, reject, alternative)


@dataclass
class AnnResult:
    mean_nn_distance: float
    expected_distance: float
    ratio: float
    z_score: float
    p_value: float
    reject: bool
    alternative: str


def ann_test(
    pp: PointPattern, alpha: float = 0.05, alternative: str = "two-sided", area="hull"
) -> AnnResult:
    """Clark-Evans nearest-neighbour ratio test.

    Small distances (negative z) point to clustering, large to dispersion.
    ``area`` is ``"hull"`` (convex hull of the points, the usual default of
    GIS nearest-neighbour tools), ``"window"`` (the study area) or a number.
    """
    if pp.n < 2:
        raise UndefinedStatisticError("nearest-neighbour test needs at least two points")
    if alternative not in ALTERNATIVES:
        raise ValidationError(f"alternative must be one of {ALTERNATIVES}")
    if isinstance(area, str):
        if area == "hull":
            try:
                a = float(ConvexHull(pp.points).volume)
            except QhullError:
                a = 0.0
            if not a > 0:
                raise UndefinedStatisticError("points are collinear; convex hull has no area")
        elif area == "window":
            a = pp.area
        else:
            raise ValidationError(f"area must be 'hull', 'window' or a number, got {area!r}")
    else:
        a = float(area)
        if not a > 0:
            raise ValidationError("area must be positive")
    n = pp.n
    d, _ = cKDTree(pp.points).query(pp.points, k=2)
    mean_nn = float(d[:, 1].mean())
    expected = CLARK_EVANS_MEAN / math.sqrt(n / a)
    se = CLARK_EVANS_SE / math.sqrt(n * n / a)
    z = (mean_nn - expected) / se
    if alternative == "clustering":
        p = float(stats.norm.cdf(z))
    elif alternative == "dispersion":
        p = float(stats.norm.sf(z))
    else:
        p = float(2 * stats.norm.sf(abs(z)))
    return AnnResult(mean_nn, expected, mean_nn / expected, z, p, p < alpha, alternative)


# --------------------------------------------------------------------------
# spatial scan
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Zones:
    order: np.ndarray  # (N, smax) unit indices by increasing distance from each centre
    dist: np.ndarray  # (N, smax) matching distances
    centre: np.ndarray  # (Z,) centre unit of each zone
    size: np.ndarray  # (Z,) number of member units


def scan_zones(sa: StudyArea, max_fraction: float = 0.5, radii=None) -> _Zones:
    """Circular zones about each centroid.

    Default: every distinct circle holding at most ``max_fraction`` of the
    units (tied distances enter together).  With ``radii``: one circle per
    centroid and radius.
    """
    key = ("scan_zones", max_fraction, None if radii is None else as_radii(radii).tobytes())
    hit = sa._cache.get(key)
    if hit is not None:
        return hit
    N = sa.n_units
    c = sa.centroids
    smax = max(1, int(math.floor(max_fraction * N)))
    full = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
    order = np.argsort(full, axis=1, kind="stable")
    dist = np.take_along_axis(full, order, axis=1)
    eps = 1e-9 * sa.diagonal
    if radii is None:
        ext = np.concatenate([dist, np.full((N, 1), np.inf)], axis=1)
        cut = ext[:, 1 : smax + 1] > ext[:, :smax] + eps
        order, dist = order[:, :smax], dist[:, :smax]
        centre, pos = np.nonzero(cut)
        size = pos + 1
    else:
        radii = as_radii(radii)
        counts = np.stack([(dist <= r + eps).sum(axis=1) for r in radii], axis=1)
        s_top = int(counts.max())
        order, dist = order[:, :s_top], dist[:, :s_top]
        centre = np.repeat(np.arange(N), len(radii))
        size = counts.ravel()
        keep = size < N
        centre, size = centre[keep], size[keep]
        uniq = np.unique(np.column_stack([centre, size]), axis=0)
        centre, size = uniq[:, 0], uniq[:, 1]
    zones = _Zones(order, dist, centre.astype(np.intp), size.astype(np.intp))
    sa._cache[key] = zones
    return zones


def _xlogy(x, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(y > 0, y, 1.0)), 0.0)


def zone_llr(c, nz, C, N):
    """Bernoulli log likelihood ratio of a zone with ``c`` cases among ``nz``
    units, given ``C`` cases among ``N`` units; zero unless the zone's rate
    exceeds the rate outside it."""
    c = np.asarray(c, dtype=float)
    nz = np.asarray(nz, dtype=float)
    out_c = C - c
    out_n = N - nz
    ll = (
        _xlogy(c, c / nz)
        + _xlogy(nz - c, (nz - c) / nz)
        + _xlogy(out_c, out_c / out_n)
        + _xlogy(out_n - out_c, (out_n - out_c) / out_n)
    )
    ll0 = _xlogy(C, C / N) + _xlogy(N - C, (N - C) / N)
    elevated = c * out_n > out_c * nz
    return np.where(elevated, np.maximum(ll - ll0, 0.0), 0.0)


def _llr_table(C: int, N: int, smax: int) -> np.ndarray:
    """``table[nz, c]`` = zone LLR for every zone size and case count."""
    nz = np.arange(smax + 1, dtype=float)[:, None]
    c = np.arange(smax + 1, dtype=float)[None, :]
    feasible = (c <= nz) & (C - c >= 0) & (C - c <= N - nz) & (nz > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = zone_llr(np.where(feasible, c, 0.0), np.where(feasible, nz, 1.0), float(C), float(N))
    return np.where(feasible, t, 0.0)


def _max_llr(zones: _Zones, Y: np.ndarray, block: int = 32):
    """Maximum zone LLR (and its zone index) for each row of ``Y``."""
    Y = np.atleast_2d(Y)
    N = Y.shape[1]
    C = Y.sum(axis=1).astype(int)
    smax = int(zones.size.max())
    # zone counts never exceed smax, so a narrow accumulator is exact
    ctype = np.uint8 if smax < 2**8 else np.int32
    tables = {int(k): _llr_table(int(k), N, smax) for k in np.unique(C)}
    flat = zones.centre * zones.order.shape[1] + zones.size - 1
    best = np.empty(len(Y))
    arg = np.empty(len(Y), dtype=np.intp)
    for lo in range(0, len(Y), block):
        rows = Y[lo : lo + block].astype(ctype)
        cum = np.cumsum(rows[:, zones.order], axis=2, dtype=ctype)
        c = cum.reshape(len(rows), -1)[:, flat]
        for b in range(len(rows)):
            llr = tables[int(C[lo + b])][zones.size, c[b]]
            k = int(np.argmax(llr))
            best[lo + b], arg[lo + b] = llr[k], k
    return best, arg


@dataclass
class ScanNull:
    n: int
    max_llr: np.ndarray  # sorted ascending
    fingerprint: str


def scan_null(sa: StudyArea, n: int, nsim: int = 999, seed=0, *, max_fraction=0.5, radii=None) -> ScanNull:
    """Maximum-LLR null from ``nsim`` equal-probability patterns with ``n`` cases."""
    N = sa.n_units
    if not 1 <= n < N:
        raise UndefinedStatisticError(f"scan test undefined for {n} cases among {N} units")
    zones = scan_zones(sa, max_fraction, radii)
    base = seed if isinstance(seed, RngStream) else RngStream(seed)
    Y = np.stack([swor(N, n, None, base.child(g)) for g in range(nsim)])
    vals, _ = _max_llr(zones, Y)
    return ScanNull(int(n), np.sort(vals), sa.fingerprint)


@dataclass
class ScanResult:
    centre_id: object
    radius: float
    member_ids: list
    llr: float
    p_value: float
    reject: bool


def scan_test(
    sa: StudyArea,
    y,
    nsim: int = 999,
    seed=0,
    alpha: float = 0.05,
    *,
    null: ScanNull | None = None,
    max_fraction: float = 0.5,
    radii=None,
) -> ScanResult:
    """Monte Carlo scan test; ``p = (1 + #{null ≥ observed}) / (1 + nsim)``.

    Pass a precomputed ``null`` (from :func:`scan_null`) to reuse the same
    simulations across many patterns with the same case count.
    """
    y = np.asarray(y).astype(np.int8)
    N = sa.n_units
    C = int(y.sum())
    if C <= 0 or C >= N:
        raise UndefinedStatisticError(f"scan test undefined for {C} cases among {N} units")
    if null is None:
        if nsim < 19:
            raise ValidationError("scan test needs at least 19 simulations")
        null = scan_null(sa, C, nsim, seed, max_fraction=max_fraction, radii=radii)
    elif null.n != C or null.fingerprint != sa.fingerprint:
        raise IncompatibleNullError("scan null was built for a different case count or study area")
    zones = scan_zones(sa, max_fraction, radii)
    llr, arg = _max_llr(zones, y[None, :])
    obs = float(llr[0])
    k = int(arg[0])
    centre, size = int(zones.centre[k]), int(zones.size[k])
    members = zones.order[centre, :size]
    exceed = len(null.max_llr) - np.searchsorted(null.max_llr, obs - 1e-12 * max(obs, 1.0), side="left")
    p = (1 + exceed) / (1 + len(null.max_llr))
    return ScanResult(
        centre_id=sa.units[centre].id,
        radius=float(zones.dist[centre, size - 1]),
        member_ids=[sa.units[m].id for m in members],
        llr=obs,
        p_value=float(p),
        reject=bool(p <= alpha),
    )
