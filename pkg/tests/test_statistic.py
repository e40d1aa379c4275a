import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import study_from_boxes
from rkad.errors import BudgetError, IncompatibleNullError, UndefinedStatisticError, ValidationError
from rkad.geometry import PolygonSet, disc_polygon_intersection_area
from rkad.sampling import RngStream, swor
from rkad.simstudy import default_radii, make_grid_study
from rkad.statistic import (
    critical_values,
    estimate_null,
    exact_m_null,
    local_values,
    m_avg,
    m_local,
    rkad_test,
    t_statistic,
)
from rkad.study import ArealUnit, StudyArea


def direct_m_avg(boxes, y, r):
    """m_avg from first principles: disc ∩ each observed box, summed per centroid."""
    cells = [PolygonSet.box(*b) for b in boxes]
    cents = [((b[0] + b[2]) / 2, (b[1] + b[3]) / 2) for b in boxes]
    vals = []
    for i in np.flatnonzero(y):
        cov = sum(disc_polygon_intersection_area(cents[i], r, cells[j]) for j in np.flatnonzero(y))
        vals.append(cov / (math.pi * r * r))
    return float(np.mean(vals))


BOXES_2x2 = [(0, 0, 1, 1), (1, 0, 2, 1), (0, 1, 1, 2), (1, 1, 2, 2)]
BOXES_1x5 = [(k, 0, k + 1, 1) for k in range(5)]


@pytest.fixture(scope="module")
def g2():
    return make_grid_study(2, 2)


@pytest.fixture(scope="module")
def g10():
    return make_grid_study(10, 10)


def test_m_local_full_and_self_coverage(g10):
    ones = np.ones(100)
    assert m_local(g10, ones, 55, 2.0) == pytest.approx(1.0)
    only = np.zeros(100)
    only[55] = 1
    assert m_local(g10, only, 55, 0.5) == pytest.approx(1.0)
    with pytest.raises(UndefinedStatisticError):
        m_local(g10, only, 54, 1.0)


def test_m_local_two_adjacent_cells(g2):
    y = np.array([1, 1, 0, 0])
    r = 0.8
    c = (0.5, 0.5)
    exact = (
        disc_polygon_intersection_area(c, r, PolygonSet.box(0, 0, 1, 1))
        + disc_polygon_intersection_area(c, r, PolygonSet.box(1, 0, 2, 1))
    ) / (math.pi * r * r)
    assert m_local(g2, y, 0, r) == pytest.approx(exact, rel=1e-12)
    # rejection-sampling cross-check
    rng = np.random.default_rng(0)
    m = 1_000_000
    th = rng.uniform(0, 2 * np.pi, m)
    rad = r * np.sqrt(rng.random(m))
    px, py = c[0] + rad * np.cos(th), c[1] + rad * np.sin(th)
    p = np.mean((px >= 0) & (px <= 2) & (py >= 0) & (py <= 1))
    assert abs(exact - p) < 3 * math.sqrt(p * (1 - p) / m)


def test_m_avg_is_mean_of_m_local(g10):
    y = swor(100, 23, None, RngStream(3))
    for r in (0.7, 1.5, 3.0):
        locs = [m_local(g10, y, i, r) for i in np.flatnonzero(y)]
        assert m_avg(g10, y, r) == pytest.approx(np.mean(locs), abs=1e-12)
    assert m_avg(g10, y, [0.7, 1.5]).shape == (2,)
    with pytest.raises(UndefinedStatisticError):
        m_avg(g10, np.zeros(100), 1.0)


def test_m_avg_against_first_principles():
    sa = study_from_boxes(BOXES_2x2)
    y = np.array([1, 0, 1, 1])
    for r in (0.6, 1.1, 2.0):
        assert m_avg(sa, y, r) == pytest.approx(direct_m_avg(BOXES_2x2, y, r), abs=1e-12)


def test_t_statistic_examples(g10):
    y = np.zeros(100)
    y[55] = 1
    v = m_avg(g10, y, 1.0)
    assert t_statistic(g10, y, 1.0, v) == pytest.approx(0.0, abs=1e-15)
    # one unit with value 1 (disc inside its own cell) and one isolated corner unit
    y = np.zeros(100)
    y[[0, 55]] = 1
    _, vals = local_values(g10, y, [0.5])
    assert np.allclose(vals, 1.0)
    assert t_statistic(g10, y, 0.5, 0.5) == pytest.approx(0.5)
    with pytest.raises(UndefinedStatisticError):
        t_statistic(g10, np.zeros(100), 1.0, 0.5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), m_hat=st.floats(0, 1), n=st.integers(1, 99))
def test_t_statistic_bounds(seed, m_hat, n):
    g = make_grid_study(10, 10)
    y = swor(100, n, None, RngStream(seed))
    radii = np.array([0.8, 2.0, 4.0])
    t = t_statistic(g, y, radii, np.full(3, m_hat))
    assert np.all(t >= 0) and np.all(t <= max(m_hat, 1 - m_hat) + 1e-12)
    avg = m_avg(g, y, radii)
    assert np.all((avg >= 0) & (avg <= 1))


def test_scale_invariance():
    small = make_grid_study(6, 7)
    big = make_grid_study(6, 7, cell=1000.0)
    y = swor(42, 12, None, RngStream(1))
    radii = np.array([1.0, 1.7, 2.5])
    assert np.allclose(m_avg(small, y, radii), m_avg(big, y, radii * 1000), atol=1e-9)
    ns = estimate_null(small, 12, radii, 200, 4)
    nb = estimate_null(big, 12, radii * 1000, 200, 4)
    assert np.allclose(ns.m_hat, nb.m_hat, atol=1e-9)
    assert np.allclose(ns.t_samples, nb.t_samples, atol=1e-9)
    rs = rkad_test(small, y, radii, ns, "two-sided")
    rb = rkad_test(big, y, radii * 1000, nb, "two-sided")
    assert np.array_equal(rs.reject, rb.reject)
    assert np.allclose(rs.t_obs, rb.t_obs, atol=1e-9)


def test_permutation_equivariance():
    boxes = [(j, i, j + 1, i + 1) for i in range(4) for j in range(5)]
    perm = np.random.default_rng(2).permutation(20)
    a = study_from_boxes(boxes)
    b = StudyArea([ArealUnit.from_geometry(k, PolygonSet.box(*boxes[p])) for k, p in enumerate(perm)])
    y = swor(20, 7, None, RngStream(8))
    yb = y[perm]
    radii = [1.0, 2.2]
    ia, va = local_values(a, y, radii)
    ib, vb = local_values(b, yb, radii)
    # unit perm[k] of a is unit k of b
    order = {int(perm[k]): col for col, k in enumerate(ib)}
    assert np.allclose(va, vb[:, [order[int(i)] for i in ia]])
    assert np.allclose(m_avg(a, y, radii), m_avg(b, yb, radii))


# -- null --------------------------------------------------------------------


def test_null_degenerate_all_units(g2):
    null = estimate_null(g2, 4, [0.6, 1.2], 20, 0)
    assert np.allclose(null.t_samples, null.t_samples[:, :1])
    assert np.allclose(null.m_hat, m_avg(g2, np.ones(4), [0.6, 1.2]))


def test_null_structure_and_determinism(g10):
    radii = default_radii(g10, 4)
    a = estimate_null(g10, 25, radii, 300, 17)
    b = estimate_null(g10, 25, radii, 300, 17, low_memory=True)
    c = estimate_null(g10, 25, radii, 300, 17, workers=2)
    assert a.t_samples.shape == (4, 300) and a.G == 300
    assert np.all(np.diff(a.t_samples, axis=1) >= 0)
    assert np.all((a.m_hat > 0) & (a.m_hat <= 1))
    for other in (b, c):
        assert np.array_equal(a.m_hat, other.m_hat)
        assert np.array_equal(a.t_samples, other.t_samples)
    d = estimate_null(g10, 25, radii, 300, 18)
    assert not np.array_equal(a.t_samples, d.t_samples)


def test_null_two_pass_definition(g10):
    radii = [1.0, 2.0]
    null = estimate_null(g10, 10, radii, 50, 3)
    pats = [swor(100, 10, None, RngStream(3, (g,))) for g in range(50)]
    avgs = np.array([m_avg(g10, y, radii) for y in pats])
    m_hat = avgs.mean(axis=0)
    assert np.allclose(null.m_hat, m_hat, atol=1e-12)
    t = np.sort(np.array([t_statistic(g10, y, radii, m_hat) for y in pats]).T, axis=1)
    assert np.allclose(null.t_samples, t, atol=1e-12)


def test_null_validation(g2):
    with pytest.raises(ValidationError):
        estimate_null(g2, 5, [1.0], 10)
    with pytest.raises(ValidationError):
        estimate_null(g2, 2, [1.0], 1)
    with pytest.raises(ValidationError):
        estimate_null(g2, 2, [2.0, 1.0], 10)


# -- exact enumeration --------------------------------------------------------


def test_exact_null_full_sample(g2):
    assert exact_m_null(g2, 4, 1.3) == pytest.approx(m_avg(g2, np.ones(4), 1.3))


def test_exact_null_self_coverage():
    line = study_from_boxes([(0, 0, 1, 1), (1, 0, 2, 1), (2, 0, 3, 1)])
    assert exact_m_null(line, 1, 0.3) == pytest.approx(1.0)


@pytest.mark.parametrize("boxes", [BOXES_2x2, BOXES_1x5])
def test_exact_null_hand_enumeration(boxes):
    sa = study_from_boxes(boxes)
    N = len(boxes)
    for r in (0.5, 0.9, 1.6):
        vals = []
        for combo in itertools.combinations(range(N), 2):
            y = np.zeros(N)
            y[list(combo)] = 1
            vals.append(direct_m_avg(boxes, y, r))
        assert exact_m_null(sa, 2, r) == pytest.approx(np.mean(vals), abs=1e-12)


def test_exact_null_budget(g10):
    with pytest.raises(BudgetError):
        exact_m_null(g10, 50, 1.0)


# -- test decisions -------------------------------------------------------------


def test_order_statistic_convention(g10):
    null = estimate_null(g10, 20, [1.0], 100, 0)
    lo, hi = critical_values(null, "two-sided", 0.05)
    assert hi[0] == null.t_samples[0, 97]  # ceil(0.975 * 100) = 98th smallest
    assert lo[0] == null.t_samples[0, 2]  # ceil(0.025 * 100) = 3rd smallest
    lo, hi = critical_values(null, "clustering", 0.05)
    assert np.isnan(lo[0]) and hi[0] == null.t_samples[0, 94]


def test_corner_cluster_rejects_everywhere(g10):
    y = np.zeros(100, dtype=int)
    for i in range(5):
        for j in range(5):
            y[i * 10 + j] = 1
    radii = default_radii(g10, 5)
    null = estimate_null(g10, 25, radii, 200, 1)
    res = rkad_test(g10, y, radii, null, "clustering", 0.05)
    assert res.reject.all()
    assert np.all(res.quantile == 1.0)
    rows = list(res.rows())
    assert rows[0]["decision"] == "reject" and rows[0]["crit_lo"] is None


def test_decisions_follow_critical_values(g10):
    radii = default_radii(g10, 4)
    null = estimate_null(g10, 30, radii, 200, 2)
    for s in range(30):
        y = swor(100, 30, None, RngStream(99, (s,)))
        for alt in ("clustering", "dispersion", "two-sided"):
            res = rkad_test(g10, y, radii, null, alt, 0.1)
            lo, hi = critical_values(null, alt, 0.1)
            expect = np.zeros(4, bool)
            if alt != "dispersion":
                expect |= res.t_obs > hi
            if alt != "clustering":
                expect |= res.t_obs < lo
            assert np.array_equal(res.reject, expect)
            assert np.all((res.quantile >= 0) & (res.quantile <= 1))


def test_incompatible_null(g10):
    radii = [1.0, 2.0]
    null = estimate_null(g10, 10, radii, 50, 0)
    y = swor(100, 11, None, RngStream(0))
    with pytest.raises(IncompatibleNullError):
        rkad_test(g10, y, radii, null)
    y = swor(100, 10, None, RngStream(0))
    with pytest.raises(IncompatibleNullError):
        rkad_test(make_grid_study(10, 10, cell=2.0), y, radii, null)
    with pytest.raises(IncompatibleNullError):
        rkad_test(g10, y, [1.0, 2.5], null)


def test_calibration_small_grid():
    # data exchangeable with the null draws: rejection rate stays near alpha
    g = make_grid_study(6, 6)
    radii = [1.0, 2.0]
    hits = np.zeros(2)
    reps = 200
    for s in range(reps):
        null = estimate_null(g, 9, radii, 99, 5000 + s)
        y = swor(36, 9, None, RngStream(6, (s,)))
        hits += rkad_test(g, y, radii, null, "clustering", 0.1).reject
    rate = hits / reps
    assert np.all(np.abs(rate - 0.1) < 3 * math.sqrt(0.1 * 0.9 / reps))
