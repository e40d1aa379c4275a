"""Ripley's K for areal data: local and average disc coverage, the Monte
Carlo null of the deviation statistic, and the quantile test.

For an observed unit ``i`` and radius ``r`` the local coverage is the share
of the disc of radius ``r`` about the unit's centroid that falls in observed
units.  Its null mean, conditional on the number ``n`` of observed units,
is estimated by equal-probability sampling without replacement; the test
statistic is the mean absolute deviation of the local coverages from that
estimate.
"""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetError,
    IncompatibleNullError,
    UndefinedStatisticError,
    ValidationError,
)
from .parallel import ordered_map
from .sampling import RngStream, swor
from .study import StudyArea, coverage_matrices, observed_coverage

__all__ = [
    "ALTERNATIVES",
    "as_radii",
    "null_fingerprint",
    "m_local",
    "local_values",
    "m_avg",
    "t_statistic",
    "NullDistribution",
    "estimate_null",
    "exact_m_null",
    "RkadResult",
    "rkad_test",
]

ALTERNATIVES = ("clustering", "dispersion", "two-sided")
BLOCK = 128


def as_radii(radii) -> np.ndarray:
    r = np.atleast_1d(np.asarray(radii, dtype=float))
    if r.ndim != 1 or r.size == 0:
        raise ValidationError("radius grid must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(r)) or r[0] <= 0 or np.any(np.diff(r) <= 0):
        raise ValidationError("radii must be positive and strictly increasing")
    return r


def null_fingerprint(sa: StudyArea, radii) -> str:
    h = hashlib.sha256(sa.fingerprint.encode())
    h.update(as_radii(radii).tobytes())
    return h.hexdigest()


def _pattern(sa: StudyArea, y) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (sa.n_units,):
        raise ValidationError(f"pattern has shape {y.shape}, expected ({sa.n_units},)")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("pattern must be binary")
    return y.astype(np.int8)


def m_local(sa: StudyArea, y, i: int, r: float) -> float:
    """Observed share of the radius-``r`` disc about unit ``i``'s centroid."""
    y = _pattern(sa, y)
    if y[i] != 1:
        raise UndefinedStatisticError(f"local coverage undefined: unit {i} is not observed")
    cov = observed_coverage(sa, y, sa.centroids[i], r)
    return min(cov / (math.pi * r * r), 1.0)


def local_values(sa: StudyArea, y, radii) -> tuple[np.ndarray, np.ndarray]:
    """Local coverages of all observed units at every radius.

    Returns ``(idx, values)`` with ``idx`` the observed unit indices
    (ascending) and ``values`` of shape ``(len(radii), len(idx))``.
    """
    y = _pattern(sa, y)
    idx = np.flatnonzero(y)
    mats = coverage_matrices(sa, as_radii(radii))
    yf = y.astype(float)
    vals = np.empty((len(mats), idx.size))
    for k, M in enumerate(mats):
        vals[k] = M[idx] @ yf
    return idx, np.minimum(vals, 1.0)


def m_avg(sa: StudyArea, y, r) -> float | np.ndarray:
    """Average local coverage over observed units (scalar ``r`` or a grid)."""
    scalar = np.ndim(r) == 0
    idx, vals = local_values(sa, y, r)
    if idx.size == 0:
        raise UndefinedStatisticError("average coverage undefined for an empty pattern")
    out = vals.mean(axis=1)
    return float(out[0]) if scalar else out


def t_statistic(sa: StudyArea, y, r, m_hat) -> float | np.ndarray:
    """Mean absolute deviation of the local coverages from ``m_hat``."""
    scalar = np.ndim(r) == 0
    idx, vals = local_values(sa, y, r)
    if idx.size == 0:
        raise UndefinedStatisticError("test statistic undefined for an empty pattern")
    m_hat = np.atleast_1d(np.asarray(m_hat, dtype=float))[:, None]
    out = np.abs(vals - m_hat).mean(axis=1)
    return float(out[0]) if scalar else out


@dataclass
class NullDistribution:
    """Monte Carlo null for a fixed study area, sample size and radius grid.

    ``t_samples`` has shape ``(len(radii), G)`` and is sorted along each row.
    """

    n: int
    radii: np.ndarray
    m_hat: np.ndarray
    t_samples: np.ndarray
    seed: int
    fingerprint: str
    weighted: bool = False
    local: np.ndarray | None = field(default=None, repr=False)

    @property
    def G(self) -> int:
        return self.t_samples.shape[1]


def _null_patterns(N, n, seed, lo, hi, weights):
    return np.stack([swor(N, n, weights, RngStream(seed, (g,))) for g in range(lo, hi)])


def _null_locals(ctx, task):
    sa, n, radii, seed, weights = ctx["sa"], ctx["n"], ctx["radii"], ctx["seed"], ctx["weights"]
    lo, hi = task
    Y = _null_patterns(sa.n_units, n, seed, lo, hi, weights)
    idx = np.nonzero(Y)[1].reshape(hi - lo, n)
    Yt = Y.T.astype(float)
    mats = coverage_matrices(sa, radii)
    out = np.empty((len(mats), hi - lo, n))
    for k, M in enumerate(mats):
        full = np.asarray(M @ Yt).T
        out[k] = np.minimum(np.take_along_axis(full, idx, axis=1), 1.0)
    return out


def _null_pass_avg(ctx, task):
    return _null_locals(ctx, task).mean(axis=2)


def _null_pass_t(ctx, task):
    L = _null_locals(ctx, task)
    return np.abs(L - ctx["m_hat"][:, None, None]).mean(axis=2)


def estimate_null(
    sa: StudyArea,
    n: int,
    radii,
    G: int = 1000,
    seed: int = 0,
    *,
    workers: int = 1,
    low_memory: bool = False,
    weights=None,
) -> NullDistribution:
    """Simulate ``G`` equal-probability patterns of size ``n`` and build the null.

    Two passes, as the statistic requires: the grand mean of the per-pattern
    average coverages first, then each pattern's deviation statistic about
    it.  Pattern ``g`` comes from stream ``(seed, g)``, so results do not
    depend on ``workers``.  By default the per-pattern local coverages are
    kept between passes; ``low_memory`` regenerates them from their streams.

    ``weights`` switches to a weighted without-replacement null (experimental).
    """
    radii = as_radii(radii)
    N = sa.n_units
    if not 1 <= n <= N:
        raise ValidationError(f"sample size n={n} must lie in [1, {N}]")
    if G < 2:
        raise ValidationError("need at least 2 null simulations")
    coverage_matrices(sa, radii)  # warm the cache before shipping sa to workers
    ctx = {"sa": sa, "n": int(n), "radii": radii, "seed": int(seed), "weights": weights}
    tasks = [(lo, min(lo + BLOCK, G)) for lo in range(0, G, BLOCK)]

    local = None
    if low_memory:
        avg = np.concatenate(ordered_map(_null_pass_avg, tasks, ctx, workers), axis=1)
    else:
        local = np.concatenate(ordered_map(_null_locals, tasks, ctx, workers), axis=1)
        avg = local.mean(axis=2)
    m_hat = avg.mean(axis=1)
    if local is None:
        ctx["m_hat"] = m_hat
        t = np.concatenate(ordered_map(_null_pass_t, tasks, ctx, workers), axis=1)
    else:
        t = np.abs(local - m_hat[:, None, None]).mean(axis=2)
    return NullDistribution(
        n=int(n),
        radii=radii,
        m_hat=m_hat,
        t_samples=np.sort(t, axis=1),
        seed=int(seed),
        fingerprint=null_fingerprint(sa, radii),
        weighted=weights is not None,
        local=local,
    )


def exact_m_null(sa: StudyArea, n: int, r, budget: int = 10**6) -> float | np.ndarray:
    """Exact null mean coverage: the average over every ``n``-subset of units."""
    N = sa.n_units
    if not 1 <= n <= N:
        raise ValidationError(f"sample size n={n} must lie in [1, {N}]")
    total = math.comb(N, n)
    if total > budget:
        raise BudgetError(f"C({N}, {n}) = {total} subsets exceeds the budget of {budget}")
    scalar = np.ndim(r) == 0
    radii = as_radii(r)
    mats = coverage_matrices(sa, radii)
    acc = np.zeros(len(radii))
    combos = itertools.combinations(range(N), n)
    while True:
        chunk = list(itertools.islice(combos, 4096))
        if not chunk:
            break
        idx = np.array(chunk, dtype=np.intp)
        Y = np.zeros((len(chunk), N))
        np.put_along_axis(Y, idx, 1.0, axis=1)
        for k, M in enumerate(mats):
            full = np.asarray(M @ Y.T).T
            acc[k] += np.minimum(np.take_along_axis(full, idx, axis=1), 1.0).mean(axis=1).sum()
    out = acc / total
    return float(out[0]) if scalar else out


def _order_stat(sorted_row: np.ndarray, p: float) -> float:
    """The ceil(p·G)-th smallest value (1-based), clamped to the sample."""
    G = sorted_row.shape[-1]
    j = min(max(math.ceil(p * G - 1e-9), 1), G)
    return sorted_row[..., j - 1]


@dataclass
class RkadResult:
    radii: np.ndarray
    n: int
    m_avg: np.ndarray
    m_hat: np.ndarray
    t_obs: np.ndarray
    quantile: np.ndarray
    crit_lo: np.ndarray
    crit_hi: np.ndarray
    reject: np.ndarray
    alternative: str
    alpha: float

    def rows(self):
        for k, r in enumerate(self.radii):
            yield {
                "radius": float(r),
                "m_avg": float(self.m_avg[k]),
                "t_obs": float(self.t_obs[k]),
                "crit_lo": None if np.isnan(self.crit_lo[k]) else float(self.crit_lo[k]),
                "crit_hi": None if np.isnan(self.crit_hi[k]) else float(self.crit_hi[k]),
                "quantile_pos": float(self.quantile[k]),
                "decision": "reject" if self.reject[k] else "fail-to-reject",
            }


def critical_values(null: NullDistribution, alternative: str, alpha: float):
    """Lower and upper critical values per radius (NaN where a tail is unused)."""
    if alternative not in ALTERNATIVES:
        raise ValidationError(f"alternative must be one of {ALTERNATIVES}")
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    R = len(null.radii)
    lo = np.full(R, np.nan)
    hi = np.full(R, np.nan)
    tail = alpha / 2 if alternative == "two-sided" else alpha
    if alternative in ("clustering", "two-sided"):
        hi = _order_stat(null.t_samples, 1.0 - tail)
    if alternative in ("dispersion", "two-sided"):
        lo = _order_stat(null.t_samples, tail)
    return lo, hi


def rkad_test(
    sa: StudyArea,
    y,
    radii,
    null: NullDistribution,
    alternative: str = "clustering",
    alpha: float = 0.05,
) -> RkadResult:
    """Compare the observed deviation statistic with the Monte Carlo null.

    Clustering rejects when the statistic strictly exceeds the upper
    critical order statistic, dispersion when it falls strictly below the
    lower one; two-sided splits ``alpha`` evenly between the tails.
    """
    radii = as_radii(radii)
    y = _pattern(sa, y)
    n = int(y.sum())
    if n < 1:
        raise UndefinedStatisticError("test undefined for an empty pattern")
    if null.n != n:
        raise IncompatibleNullError(f"null was built for n={null.n}, pattern has n={n}")
    if null.fingerprint != null_fingerprint(sa, radii):
        raise IncompatibleNullError(
            "null distribution was built for a different study area or radius grid"
        )
    lo, hi = critical_values(null, alternative, alpha)
    _, vals = local_values(sa, y, radii)
    avg = vals.mean(axis=1)
    t_obs = np.abs(vals - null.m_hat[:, None]).mean(axis=1)
    G = null.G
    quantile = np.array(
        [np.searchsorted(null.t_samples[k], t_obs[k], side="right") / G for k in range(len(radii))]
    )
    reject = np.zeros(len(radii), dtype=bool)
    if alternative in ("clustering", "two-sided"):
        reject |= t_obs > hi
    if alternative in ("dispersion", "two-sided"):
        reject |= t_obs < lo
    return RkadResult(
        radii=radii,
        n=n,
        m_avg=avg,
        m_hat=null.m_hat.copy(),
        t_obs=t_obs,
        quantile=quantile,
        crit_lo=np.asarray(lo, dtype=float),
        crit_hi=np.asarray(hi, dtype=float),
        reject=reject,
        alternative=alternative,
        alpha=float(alpha),
    )
