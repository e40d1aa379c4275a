"""Data-generating mechanisms: weighted sampling without replacement and the
adjacency-driven cluster / dispersion generator.

Randomness comes from :class:`RngStream`, a (seed, stream id) pair mapped to
an independent PCG64 generator via ``numpy.random.SeedSequence``.  A given
pair always yields the same draws, whichever process or thread uses it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSampleError, ValidationError

__all__ = [
    "RngStream",
    "swor",
    "single_zone_weights",
    "cluster_sample",
    "MAX_RETRIES",
]

MAX_RETRIES = 100


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: tuple = ()

    def __post_init__(self):
        s = self.stream
        if isinstance(s, (int, np.integer)):
            s = (int(s),)
        object.__setattr__(self, "stream", tuple(int(k) for k in s))
        object.__setattr__(self, "seed", int(self.seed) & (2**64 - 1))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(key))


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def swor(N: int, k: int, w=None, rng=None) -> np.ndarray:
    """Draw ``k`` of ``N`` units without replacement, each draw proportional
    to the remaining weights.  Returns a 0/1 pattern of length ``N``.

    Uses exponential keys (smallest ``E_i / w_i`` win), which has exactly the
    distribution of successive proportional draws.
    """
    if w is None:
        w = np.ones(N)
    w = np.asarray(w, dtype=float)
    if w.shape != (N,):
        raise ValidationError(f"weight vector has shape {w.shape}, expected ({N},)")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite and nonnegative")
    if not 0 <= k <= N:
        raise ValidationError(f"cannot draw {k} of {N} units")
    positive = np.flatnonzero(w > 0)
    if k > positive.size:
        raise InfeasibleSampleError(
            f"requested {k} units but only {positive.size} have positive weight"
        )
    y = np.zeros(N, dtype=np.int8)
    if k == 0:
        return y
    g = _gen(rng)
    keys = g.standard_exponential(positive.size) / w[positive]
    if k < positive.size:
        chosen = positive[np.argpartition(keys, k - 1)[:k]]
    else:
        chosen = positive
    y[chosen] = 1
    return y


def single_zone_weights(N: int, zone, q: float) -> np.ndarray:
    """Weight ``q`` for units in ``zone`` and 1 elsewhere."""
    if not q > 0:
        raise ValidationError("relative risk q must be positive")
    zone = np.asarray(list(zone), dtype=np.intp)
    if zone.size == 0:
        raise ValidationError("zone must be nonempty")
    w = np.ones(N)
    w[zone] = q
    return w


def _cluster_once(adj, N, k, m, q, g, dynamic):
    y = swor(N, m, None, g)
    nbr_count = np.asarray(adj @ y, dtype=float).ravel()
    if q == 0 and np.any(nbr_count[y == 1] > 0):
        # q = 0 promises an independent set, so touching seeds count as a failed draw
        raise InfeasibleSampleError("seed units are adjacent")
    if not dynamic:
        w = np.where(nbr_count > 0, q, 1.0)
        w[y == 1] = 0.0
        extra = swor(N, k - m, w, g)
        return y | extra
    for _ in range(k - m):
        w = np.where(nbr_count > 0, q, 1.0)
        w[y == 1] = 0.0
        cw = np.cumsum(w)
        total = cw[-1]
        if not total > 0:
            raise InfeasibleSampleError("no selectable units remain")
        j = int(np.searchsorted(cw, g.random() * total, side="right"))
        j = min(j, N - 1)
        while w[j] == 0:  # guard against landing on a zero-width slot at round-off
            j -= 1
        y[j] = 1
        lo, hi = adj.indptr[j], adj.indptr[j + 1]
        nbr_count[adj.indices[lo:hi]] += 1
    return y


def cluster_sample(
    sa, k: int, m: int, q: float, rng, *, dynamic: bool = True, contiguity: str | None = None
) -> np.ndarray:
    """Two-stage generator: ``m`` uniform seeds, then ``k - m`` further draws
    in which units adjacent to the selection get weight ``q`` and the rest 1.

    With ``dynamic=True`` adjacency is measured against everything selected
    so far, updated after every draw; with ``dynamic=False`` only against the
    ``m`` seeds.  ``q = 0`` can run out of candidates, or draw seeds that
    already touch; the draw is then retried on fresh sub-streams up to
    ``MAX_RETRIES`` times.

    ``contiguity`` picks the neighbour rule ("rook" or "queen"); ``None``
    uses the study area's own adjacency.
    """
    N = sa.n_units
    if not 0 <= m <= k <= N:
        raise ValidationError(f"need 0 <= m <= k <= N, got m={m}, k={k}, N={N}")
    if q < 0:
        raise ValidationError("q must be nonnegative")
    adj = sa.adjacency_matrix(contiguity)
    if isinstance(rng, RngStream):
        attempts = (rng.child(t) for t in range(MAX_RETRIES))
    else:
        g = _gen(rng)
        attempts = (g for _ in range(MAX_RETRIES))
    for sub in attempts:
        try:
            return _cluster_once(adj, N, k, m, q, _gen(sub), dynamic)
        except InfeasibleSampleError:
            continue
    raise InfeasibleSampleError(
        f"cluster_sample(k={k}, m={m}, q={q}) infeasible after {MAX_RETRIES} attempts"
    )
