import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import study_from_boxes
from rkad.errors import ValidationError
from rkad.geometry import PolygonSet, disc_polygon_intersection_area
from rkad.simstudy import make_grid_study
from rkad.study import ArealUnit, StudyArea, build_adjacency, coverage_matrices, observed_coverage


def grid_boxes(rows, cols):
    return [(j, i, j + 1, i + 1) for i in range(rows) for j in range(cols)]


@pytest.fixture(scope="module")
def g3():
    return study_from_boxes(grid_boxes(3, 3))


def test_study_area_basics(g3):
    assert g3.n_units == 9
    assert g3.total_area == pytest.approx(9.0)
    assert g3.bbox == (0.0, 0.0, 3.0, 3.0)
    assert g3.tol == pytest.approx(1e-9 * math.hypot(3, 3))
    assert np.allclose(g3.centroids[4], (1.5, 1.5))


def test_rook_and_queen_on_3x3(g3):
    rook = build_adjacency(g3, "rook")
    queen = build_adjacency(g3, "queen")
    assert len(rook[4]) == 4 and len(queen[4]) == 8
    assert len(rook[0]) == 2 and len(queen[0]) == 3
    for nb in (rook, queen):
        for i, row in enumerate(nb):
            assert i not in row
            for j in row:
                assert i in nb[j]


def test_adjacency_matrix_rules(g3):
    a = g3.adjacency_matrix()
    q = g3.adjacency_matrix("queen")
    assert a.sum() == 24 and q.sum() == 40
    assert (a != a.T).nnz == 0 and (q != q.T).nnz == 0
    assert g3.adjacency_matrix("queen") is q  # cached


def test_distant_squares_have_no_neighbours():
    sa = study_from_boxes([(0, 0, 1, 1), (5, 5, 6, 6)])
    assert build_adjacency(sa, "queen") == [[], []]


def test_short_shared_boundary_is_rook():
    # offset squares share an edge piece of length 0.5
    sa = study_from_boxes([(0, 0, 1, 1), (1, 0.5, 2, 1.5)])
    assert build_adjacency(sa, "rook") == [[1], [0]]


def test_grid_study_uses_rook_and_exact_geometry(grid20):
    assert grid20.n_units == 400
    assert grid20.total_area == pytest.approx(400.0)
    assert np.allclose(grid20.centroids[0], (0.5, 0.5))
    assert grid20.adjacency == tuple(tuple(nb) for nb in build_adjacency(grid20, "rook"))
    small = make_grid_study(2, 2)
    assert all(len(nb) == 2 for nb in small.adjacency)


def test_overlapping_units_rejected():
    with pytest.raises(ValidationError):
        study_from_boxes([(0, 0, 1, 1), (0.5, 0, 1.5, 1)])


def test_fingerprint_tracks_geometry():
    a = study_from_boxes(grid_boxes(2, 2))
    b = study_from_boxes(grid_boxes(2, 2))
    c = study_from_boxes([(0, 0, 1, 1), (1, 0, 2, 1), (0, 1, 1, 2), (1, 1, 2, 2.5)])
    assert a.fingerprint == b.fingerprint != c.fingerprint


def test_spatial_index_disc_query(grid20):
    got = grid20.index.query_disc((10.0, 10.0), 1.0)
    brute = [
        k for k, (x0, y0, x1, y1) in enumerate(grid20.unit_bboxes)
        if (max(x0 - 10, 10 - x1, 0) ** 2 + max(y0 - 10, 10 - y1, 0) ** 2) <= 1.0
    ]
    assert list(got) == brute


def test_observed_coverage_examples(g3):
    y = np.ones(9)
    assert observed_coverage(g3, y, (1.5, 1.5), 1.0) == pytest.approx(math.pi)
    assert observed_coverage(g3, np.zeros(9), (1.5, 1.5), 1.0) == 0.0
    only = np.zeros(9)
    only[4] = 1
    cell = PolygonSet.box(1, 1, 2, 2)
    assert observed_coverage(g3, only, (1.5, 1.5), 1.0) == pytest.approx(
        disc_polygon_intersection_area((1.5, 1.5), 1.0, cell), rel=1e-12
    )
    assert observed_coverage(g3, only, (1.5, 1.5), 1.0) == pytest.approx(1.0, rel=1e-12)


def test_observed_coverage_matches_sampling(g3):
    rng = np.random.default_rng(5)
    y = np.array([1, 0, 1, 1, 1, 0, 0, 1, 0])
    c, r = (1.2, 1.7), 1.4
    m = 1_000_000
    th = rng.uniform(0, 2 * np.pi, m)
    rad = r * np.sqrt(rng.random(m))
    px, py = c[0] + rad * np.cos(th), c[1] + rad * np.sin(th)
    inside = (px >= 0) & (px < 3) & (py >= 0) & (py < 3)
    cell = np.where(inside, np.floor(py).astype(int) * 3 + np.floor(px).astype(int), 0)
    p = np.mean(inside & (y[cell] == 1))
    full = math.pi * r * r
    se = full * math.sqrt(p * (1 - p) / m)
    assert abs(observed_coverage(g3, y, c, r) - full * p) < 3 * se


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_coverage_monotone_and_bounded(seed):
    sa = make_grid_study(4, 5)
    rng = np.random.default_rng(seed)
    y = (rng.random(sa.n_units) < 0.4).astype(int)
    c = rng.uniform([-0.5, -0.5], [5.5, 4.5])
    r1, r2 = np.sort(rng.uniform(0.05, 3.0, 2))
    a1 = observed_coverage(sa, y, c, r1)
    assert 0 <= a1 <= math.pi * r1 * r1 + 1e-12
    assert a1 <= observed_coverage(sa, y, c, r2) + 1e-12
    more = y.copy()
    more[rng.integers(sa.n_units)] = 1
    assert a1 <= observed_coverage(sa, more, c, r1) + 1e-12


def test_coverage_matrices_match_direct_queries(grid20):
    radii = np.array([1.0, 2.5])
    mats = coverage_matrices(grid20, radii)
    rng = np.random.default_rng(0)
    y = (rng.random(400) < 0.3).astype(float)
    for k, r in enumerate(radii):
        local = mats[k] @ y
        for i in (0, 21, 210, 399):
            direct = observed_coverage(grid20, y, grid20.centroids[i], r) / (math.pi * r * r)
            assert local[i] == pytest.approx(direct, abs=1e-12)
    assert coverage_matrices(grid20, radii) is mats


def test_explicit_adjacency_and_footprint():
    units = [ArealUnit.from_geometry(k, PolygonSet.box(k, 0, k + 1, 1)) for k in range(3)]
    sa = StudyArea(units, adjacency=[[1], [0, 2], [1]], footprint=PolygonSet.box(0, 0, 3, 1), validate=False)
    assert sa.adjacency == ((1,), (0, 2), (1,))
    assert sa.total_area == 3.0
