"""Simulation study harness: the regular-grid study area, the nineteen data
generating mechanisms, and rejection-rate tables over the four methods."""
from __future__ import annotations

import configparser
import csv
import io
import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .comparators import (
    ann_test,
    centroid_pattern,
    k_envelope_test,
    scan_null,
    scan_test,
)
from .errors import ValidationError
from .geometry import Point, PolygonSet
from .parallel import ordered_map
from .sampling import RngStream, cluster_sample, single_zone_weights, swor
from .statistic import as_radii, estimate_null, rkad_test
from .study import ArealUnit, StudyArea

__all__ = [
    "ScenarioSpec",
    "SCENARIOS",
    "METHODS",
    "make_grid_study",
    "default_radii",
    "lower_left_zone",
    "scenario_pattern",
    "RejectionTable",
    "run_scenario",
    "run_study",
    "load_scenarios",
]

METHODS = ("ann", "scan", "rk", "rkad")
METHOD_ALIASES = {"sst": "scan", "scan": "scan", "ann": "ann", "rk": "rk", "rkad": "rkad"}
TAIL = {"I": "two-sided", "C": "clustering", "D": "dispersion"}


def make_grid_study(rows: int = 20, cols: int = 20, cell: float = 1.0) -> StudyArea:
    """``rows × cols`` square cells of side ``cell``, row-major from the origin."""
    if rows < 2 or cols < 2:
        raise ValidationError("grid needs at least 2 rows and 2 columns")
    units = []
    for i in range(rows):
        for j in range(cols):
            x0, y0 = j * cell, i * cell
            g = PolygonSet.box(x0, y0, x0 + cell, y0 + cell)
            units.append(
                ArealUnit(i * cols + j, g, Point(x0 + 0.5 * cell, y0 + 0.5 * cell), cell * cell)
            )
    adjacency = []
    for i in range(rows):
        for j in range(cols):
            nb = []
            if i > 0:
                nb.append((i - 1) * cols + j)
            if j > 0:
                nb.append(i * cols + j - 1)
            if j < cols - 1:
                nb.append(i * cols + j + 1)
            if i < rows - 1:
                nb.append((i + 1) * cols + j)
            adjacency.append(nb)
    return StudyArea(
        units,
        adjacency=adjacency,
        footprint=PolygonSet.box(0.0, 0.0, cols * cell, rows * cell),
        validate=False,
    )


def default_radii(sa: StudyArea, count: int = 10) -> np.ndarray:
    """Evenly spaced radii from the closest centroid spacing to a quarter of
    the study-area width."""
    if sa.n_units < 2:
        raise ValidationError("need at least two units to choose radii")
    d, _ = cKDTree(sa.centroids).query(sa.centroids, k=2)
    r1 = float(d[:, 1].min())
    r_max = (sa.bbox[2] - sa.bbox[0]) / 4.0
    if count == 1:
        return as_radii([r1])
    if not r_max > r1:
        raise ValidationError(
            f"quarter width {r_max:.6g} does not exceed the closest spacing {r1:.6g}"
        )
    return as_radii(np.linspace(r1, r_max, count))


def lower_left_zone(sa: StudyArea) -> np.ndarray:
    """Units whose centroid lies in the lower-left quadrant of the bounding box."""
    xmin, ymin, xmax, ymax = sa.bbox
    c = sa.centroids
    return np.flatnonzero((c[:, 0] < 0.5 * (xmin + xmax)) & (c[:, 1] < 0.5 * (ymin + ymax)))


@dataclass(frozen=True)
class ScenarioSpec:
    """One data generating mechanism.

    ``kind`` is ``uniform`` (equal-probability draws), ``zone`` (draws with
    weight ``q`` inside a fixed zone) or ``cluster`` (two-stage adjacency
    generator with ``ceil(N / seeds_divisor)`` seeds).
    """

    id: str
    kind: str
    size_divisor: int
    q: float = 1.0
    seeds_divisor: int | None = None
    zone: tuple | None = None  # unit indices; None means the lower-left quadrant

    @property
    def family(self) -> str:
        return self.id[0].upper()

    @property
    def alternative(self) -> str:
        return TAIL.get(self.family, "two-sided")

    def sample_size(self, N: int) -> int:
        return math.ceil(N / self.size_divisor)

    def seeds(self, N: int) -> int:
        return math.ceil(N / self.seeds_divisor) if self.seeds_divisor else 0


def _builtin():
    specs = [
        ScenarioSpec("I1", "uniform", 10),
        ScenarioSpec("I2", "uniform", 4),
        ScenarioSpec("I3", "uniform", 2),
        ScenarioSpec("C1", "zone", 10, 5),
        ScenarioSpec("C2", "zone", 10, 10),
        ScenarioSpec("C3", "zone", 4, 5),
        ScenarioSpec("C4", "zone", 4, 10),
        ScenarioSpec("C5", "zone", 2, 5),
        ScenarioSpec("C6", "zone", 2, 10),
        ScenarioSpec("C7", "cluster", 10, 5, 100),
        ScenarioSpec("C8", "cluster", 10, 10, 100),
        ScenarioSpec("C9", "cluster", 4, 5, 40),
        ScenarioSpec("C10", "cluster", 4, 10, 40),
        ScenarioSpec("C11", "cluster", 2, 5, 20),
        ScenarioSpec("C12", "cluster", 2, 10, 20),
        ScenarioSpec("D1", "cluster", 10, 0.1, 100),
        ScenarioSpec("D2", "cluster", 10, 0.0, 100),
        ScenarioSpec("D3", "cluster", 6, 0.1, 100),
        ScenarioSpec("D4", "cluster", 6, 0.0, 100),
    ]
    return {s.id: s for s in specs}


SCENARIOS = _builtin()


def load_scenarios(path) -> dict:
    """Read scenario definitions from an INI-style key/value file.

    Each ``[scenario <ID>]`` section takes ``kind`` (uniform | zone |
    cluster), ``size_divisor``, and where relevant ``q``, ``seeds_divisor``
    and ``zone`` (comma-separated unit indices, or ``lower-left``).  The
    first letter of the id (I, C or D) fixes the test direction.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ValidationError(f"cannot read scenario file {path}")
    out = {}
    for section in cp.sections():
        head, _, sid = section.partition(" ")
        if head != "scenario" or not sid:
            raise ValidationError(f"unexpected section [{section}]")
        s = cp[section]
        kind = s.get("kind", "uniform")
        if kind not in ("uniform", "zone", "cluster"):
            raise ValidationError(f"[{section}] unknown kind {kind!r}")
        zone = s.get("zone", "lower-left").strip()
        try:
            spec = ScenarioSpec(
                id=sid.strip(),
                kind=kind,
                size_divisor=s.getint("size_divisor"),
                q=s.getfloat("q", 1.0),
                seeds_divisor=s.getint("seeds_divisor", None),
                zone=None if zone == "lower-left" else tuple(int(v) for v in zone.split(",")),
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"[{section}] {exc}") from None
        if spec.size_divisor is None or spec.size_divisor < 1:
            raise ValidationError(f"[{section}] size_divisor must be a positive integer")
        if kind == "cluster" and not spec.seeds_divisor:
            raise ValidationError(f"[{section}] cluster scenarios need seeds_divisor")
        out[spec.id] = spec
    return out


def scenario_pattern(
    spec: ScenarioSpec, sa: StudyArea, rng, *, dynamic: bool = True, contiguity: str | None = None
) -> np.ndarray:
    N = sa.n_units
    k = spec.sample_size(N)
    if spec.kind == "uniform":
        return swor(N, k, None, rng)
    if spec.kind == "zone":
        zone = lower_left_zone(sa) if spec.zone is None else spec.zone
        return swor(N, k, single_zone_weights(N, zone, spec.q), rng)
    if spec.kind == "cluster":
        return cluster_sample(
            sa, k, spec.seeds(N), spec.q, rng, dynamic=dynamic, contiguity=contiguity
        )
    raise ValidationError(f"unknown scenario kind {spec.kind!r}")


@dataclass
class RejectionTable:
    """Rejection rates per scenario and method.

    ``rates[(dgm, method)]`` is an array with one entry per radius for the
    radius-indexed methods (rk, rkad) and a single entry for ann and scan.
    """

    radii: np.ndarray
    reps: int
    alpha: float
    seed: int
    rates: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        """One row per scenario and radius-indexed method: DGM, ANN, SST, method, r1..rK."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        R = len(self.radii)
        w.writerow(["dgm", "ann", "sst", "method"] + [f"r{k + 1}" for k in range(R)])
        w.writerow(["radius", "", "", ""] + [f"{r:.6g}" for r in self.radii])
        dgms = list(dict.fromkeys(d for d, _ in self.rates))

        def fmt(v):
            return f"{v:.4f}"

        for d in dgms:
            ann = self.rates.get((d, "ann"))
            scan = self.rates.get((d, "scan"))
            head = [d, fmt(ann[0]) if ann is not None else "", fmt(scan[0]) if scan is not None else ""]
            rows = [m for m in ("rk", "rkad") if (d, m) in self.rates]
            if not rows:
                w.writerow(head + [""] + [""] * R)
            for m in rows:
                w.writerow(head + [m.upper()] + [fmt(v) for v in self.rates[(d, m)]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "radii": [float(r) for r in self.radii],
            "reps": self.reps,
            "alpha": self.alpha,
            "seed": self.seed,
            "rates": [
                {"dgm": d, "method": m, "rates": [float(v) for v in vals]}
                for (d, m), vals in self.rates.items()
            ],
        }


def _scenario_code(sid: str) -> int:
    return zlib.crc32(sid.encode()) & 0x7FFFFFFF


# stream-key tags keeping the random streams of different purposes disjoint
_TAG_PATTERN, _TAG_RK, _TAG_SCAN_NULL, _TAG_RKAD_NULL = 1, 2, 3, 4


def _one_rep(ctx, rep):
    sa, spec, seed = ctx["sa"], ctx["spec"], ctx["seed"]
    radii, alpha, methods = ctx["radii"], ctx["alpha"], ctx["methods"]
    alt = spec.alternative
    base = RngStream(seed, (_TAG_PATTERN, _scenario_code(spec.id), rep))
    y = scenario_pattern(spec, sa, base, dynamic=ctx["dynamic"], contiguity=ctx["contiguity"])
    out = {}
    if "rkad" in methods:
        out["rkad"] = rkad_test(sa, y, radii, ctx["rkad_null"], alt, alpha).reject
    if "rk" in methods or "ann" in methods:
        pp = centroid_pattern(sa, y)
        if "ann" in methods:
            out["ann"] = np.array([ann_test(pp, alpha, alt).reject])
        if "rk" in methods:
            rk_stream = RngStream(seed, (_TAG_RK, _scenario_code(spec.id), rep))
            res = k_envelope_test(pp, radii, ctx["rk_nsim"], rk_stream, alt, alpha)
            out["rk"] = res.reject
    if "scan" in methods:
        null = ctx["scan_null"]
        if null is None:
            stream = RngStream(seed, (_TAG_SCAN_NULL, _scenario_code(spec.id), rep))
            null = scan_null(sa, int(y.sum()), ctx["scan_nsim"], stream)
        res = scan_test(sa, y, seed=None, alpha=alpha, null=null)
        out["scan"] = np.array([res.reject])
    return out


def run_scenario(
    sa: StudyArea,
    spec: ScenarioSpec,
    methods=("rkad",),
    reps: int = 200,
    *,
    radii=None,
    null_sims: int = 500,
    rk_nsim: int = 100,
    scan_nsim: int = 999,
    alpha: float = 0.05,
    seed: int = 0,
    workers: int = 1,
    nulls: dict | None = None,
    dynamic: bool = True,
    contiguity: str | None = "queen",
    scan_null_mode: str = "per-rep",
) -> RejectionTable:
    """Empirical rejection rates of each method over ``reps`` draws from ``spec``.

    RKAD and scan nulls depend only on the sample size, so they are built
    once per size (and shared through ``nulls`` when given).  Every
    replication uses its own streams, so the table is identical for any
    number of workers.

    ``contiguity`` is the neighbour rule used by the cluster/dispersion
    generator; queen (corner contact counts) is the default for the
    simulation harness, ``None`` uses the study area's own adjacency.

    ``scan_null_mode="per-rep"`` gives every replication its own scan null,
    so each scan decision is an exact Monte Carlo test; ``"shared"`` builds
    one null per sample size (much faster, but every rate then inherits the
    Monte Carlo error of that one null).
    """
    methods = tuple(dict.fromkeys(METHOD_ALIASES.get(m, m) for m in methods))
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValidationError(f"unknown methods {bad}; valid: {', '.join(METHODS)}")
    radii = default_radii(sa) if radii is None else as_radii(radii)
    nulls = {} if nulls is None else nulls
    n = spec.sample_size(sa.n_units)
    ctx = {
        "sa": sa,
        "spec": spec,
        "seed": seed,
        "radii": radii,
        "alpha": alpha,
        "methods": methods,
        "rk_nsim": rk_nsim,
        "dynamic": dynamic,
        "contiguity": contiguity,
        "scan_nsim": scan_nsim,
        "scan_null": None,
    }
    if "rkad" in methods:
        key = ("rkad", n, null_sims)
        if key not in nulls:
            nulls[key] = estimate_null(
                sa, n, radii, null_sims, RngStream(seed, (_TAG_RKAD_NULL, n)).generator().integers(2**63),
                workers=workers,
            )
        ctx["rkad_null"] = nulls[key]
    if scan_null_mode not in ("per-rep", "shared"):
        raise ValidationError("scan_null_mode must be 'per-rep' or 'shared'")
    if "scan" in methods and scan_null_mode == "shared":
        key = ("scan", n, scan_nsim)
        if key not in nulls:
            nulls[key] = scan_null(sa, n, scan_nsim, RngStream(seed, (_TAG_SCAN_NULL, n)))
        ctx["scan_null"] = nulls[key]

    results = ordered_map(_one_rep, range(reps), ctx, workers)
    table = RejectionTable(radii=radii, reps=reps, alpha=alpha, seed=seed)
    for m in methods:
        hits = np.sum([r[m] for r in results], axis=0)
        table.rates[(spec.id, m)] = hits / reps
    return table


def run_study(
    sa: StudyArea,
    scenario_ids,
    methods=("rkad",),
    reps: int = 200,
    *,
    scenarios: dict | None = None,
    **kw,
) -> RejectionTable:
    """Run several scenarios and merge them into one table (shared nulls)."""
    scenarios = SCENARIOS if scenarios is None else scenarios
    unknown = [s for s in scenario_ids if s not in scenarios]
    if unknown:
        raise ValidationError(
            f"unknown scenario ids {unknown}; valid ids: {', '.join(scenarios)}"
        )
    nulls = kw.pop("nulls", {})
    merged = None
    for sid in scenario_ids:
        t = run_scenario(sa, scenarios[sid], methods, reps, nulls=nulls, **kw)
        if merged is None:
            merged = t
        else:
            merged.rates.update(t.rates)
    return merged
