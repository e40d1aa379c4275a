import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rkad.errors import InfeasibleSampleError, ValidationError
from rkad.sampling import RngStream, cluster_sample, single_zone_weights, swor
from rkad.simstudy import make_grid_study


def adjacent_pairs(sa, y, rule=None):
    a = sa.adjacency_matrix(rule)
    y = np.asarray(y, dtype=float)
    return int(y @ (a @ y)) // 2


def test_rng_stream_determinism():
    a = RngStream(7, (1, 2)).generator().random(5)
    b = RngStream(7, (1, 2)).generator().random(5)
    c = RngStream(7, (1, 3)).generator().random(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert RngStream(7, 3).stream == (3,)
    assert RngStream(7, (1,)).child(2) == RngStream(7, (1, 2))


def test_swor_exhaustive_and_empty():
    assert swor(10, 10).sum() == 10
    assert swor(10, 0).sum() == 0


@settings(max_examples=50, deadline=None)
@given(N=st.integers(1, 60), data=st.data())
def test_swor_returns_exactly_k(N, data):
    k = data.draw(st.integers(0, N))
    y = swor(N, k, None, RngStream(data.draw(st.integers(0, 2**32))))
    assert y.dtype == np.int8 and y.sum() == k and set(np.unique(y)) <= {0, 1}


def test_zero_weight_never_selected():
    w = np.ones(12)
    w[[2, 7]] = 0
    hits = np.zeros(12)
    for s in range(10_000):
        hits += swor(12, 5, w, RngStream(1, (s,)))
    assert hits[2] == 0 and hits[7] == 0


def test_infeasible_swor():
    w = np.array([1.0, 0.0, 0.0, 1.0])
    with pytest.raises(InfeasibleSampleError):
        swor(4, 3, w, 0)
    with pytest.raises(ValidationError):
        swor(4, 5)
    with pytest.raises(ValidationError):
        swor(3, 1, [1.0, -1.0, 1.0])


def test_single_draw_probability():
    w = np.array([5.0] + [1.0] * 9)
    g = np.random.default_rng(3)
    reps = 100_000
    hits = sum(int(swor(10, 1, w, g)[0]) for _ in range(reps))
    p = 5 / 14
    se = np.sqrt(p * (1 - p) / reps)
    assert abs(hits / reps - p) < 3 * se


def test_pair_probabilities_match_successive_draws():
    # exact law of two successive proportional draws without replacement
    w = np.array([4.0, 2.0, 1.0, 1.0])
    W = w.sum()
    exact = {}
    for i in range(4):
        for j in range(i + 1, 4):
            exact[(i, j)] = w[i] / W * w[j] / (W - w[i]) + w[j] / W * w[i] / (W - w[j])
    g = np.random.default_rng(11)
    reps = 60_000
    counts = {key: 0 for key in exact}
    for _ in range(reps):
        i, j = np.flatnonzero(swor(4, 2, w, g))
        counts[(i, j)] += 1
    obs = np.array([counts[k] for k in exact])
    expected = reps * np.array(list(exact.values()))
    assert stats.chisquare(obs, expected).pvalue > 0.001


def test_uniform_marginals():
    reps, N, k = 10_000, 20, 6
    hits = np.zeros(N)
    for s in range(reps):
        hits += swor(N, k, None, RngStream(5, (s,)))
    p = k / N
    se = np.sqrt(p * (1 - p) / reps)
    assert np.all(np.abs(hits / reps - p) < 3.5 * se)


def test_single_zone_weights():
    w = single_zone_weights(400, range(100), 5)
    assert w[:100].tolist() == [5.0] * 100 and w[100:].tolist() == [1.0] * 300
    assert w[0] / w.sum() == pytest.approx(5 * (1 / w.sum()))
    with pytest.raises(ValidationError):
        single_zone_weights(10, [], 2)
    with pytest.raises(ValidationError):
        single_zone_weights(10, [1], 0)


def test_zone_q10_first_draw_odds():
    w = single_zone_weights(400, range(100), 10)
    g = np.random.default_rng(2)
    reps = 40_000
    inside = sum(int(np.flatnonzero(swor(400, 1, w, g))[0] < 100) for _ in range(reps))
    p = 1000 / 1300
    assert abs(inside / reps - p) < 3 * np.sqrt(p * (1 - p) / reps)


# -- cluster generator ------------------------------------------------------


@pytest.fixture(scope="module")
def grid():
    return make_grid_study(20, 20)


@pytest.mark.parametrize("dynamic", [True, False])
def test_cluster_sample_exact_size(grid, dynamic):
    for s in range(20):
        y = cluster_sample(grid, 40, 4, 5.0, RngStream(0, (s,)), dynamic=dynamic)
        assert y.sum() == 40


@pytest.mark.parametrize("rule", [None, "rook", "queen"])
def test_q0_gives_independent_sets(grid, rule):
    for s in range(200):
        y = cluster_sample(grid, 40, 4, 0.0, RngStream(1, (s,)), contiguity=rule)
        assert adjacent_pairs(grid, y, rule) == 0
        assert adjacent_pairs(grid, y, "rook") == 0


def test_q0_larger_samples_independent(grid):
    for s in range(50):
        y = cluster_sample(grid, 67, 4, 0.0, RngStream(2, (s,)), contiguity="queen")
        assert y.sum() == 67 and adjacent_pairs(grid, y, "queen") == 0


def test_static_q0_only_avoids_seed_neighbours(grid):
    # with seeds-only weighting later draws may touch each other
    touching = 0
    for s in range(100):
        y = cluster_sample(grid, 100, 4, 0.0, RngStream(3, (s,)), dynamic=False)
        touching += adjacent_pairs(grid, y) > 0
    assert touching > 50


def test_q1_matches_uniform_swor(grid):
    reps = 2000
    a = [adjacent_pairs(grid, cluster_sample(grid, 40, 4, 1.0, RngStream(4, (s,)))) for s in range(reps)]
    b = [adjacent_pairs(grid, swor(400, 40, None, RngStream(5, (s,)))) for s in range(reps)]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_q10_increases_adjacency(grid):
    reps = 500
    hi = [adjacent_pairs(grid, cluster_sample(grid, 40, 4, 10.0, RngStream(6, (s,)))) for s in range(reps)]
    lo = [adjacent_pairs(grid, cluster_sample(grid, 40, 4, 1.0, RngStream(7, (s,)))) for s in range(reps)]
    assert stats.mannwhitneyu(hi, lo, alternative="greater").pvalue < 0.001


def test_cluster_sample_deterministic(grid):
    a = cluster_sample(grid, 40, 4, 5.0, RngStream(9, (1,)))
    b = cluster_sample(grid, 40, 4, 5.0, RngStream(9, (1,)))
    assert np.array_equal(a, b)


def test_cluster_sample_infeasible():
    line = make_grid_study(2, 3)
    with pytest.raises(InfeasibleSampleError):
        cluster_sample(line, 5, 1, 0.0, RngStream(0))
    with pytest.raises(ValidationError):
        cluster_sample(line, 2, 3, 1.0, RngStream(0))
