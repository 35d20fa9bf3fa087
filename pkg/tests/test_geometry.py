import numpy as np
import pytest
from hypothesis import given, strategies as st

from cortexk.filterbank import GaborParams
from cortexk.geometry import (
    Axis,
    FeatureGrid,
    ball_measure,
    ball_measure_fn,
    build_patch_graph,
    counting_measure,
    glued_distance,
    glued_distances,
    grid_cell_measure,
)
from cortexk.kernel import PatchSpec, gabor_kernel, kernel_distance, patch_mask

from oracles import chain_enumeration

GP = GaborParams(1.0, 0.5)
ETA = GP.eta


def small_grid(step=0.25, count=5):
    half = step * (count // 2)
    return FeatureGrid((
        Axis.symmetric("x", half, step),
        Axis.symmetric("y", half, step),
        Axis.periodic_circle("theta", count),
    ))


def _pts(P):
    return P[..., 0], P[..., 1], P[..., 2]


def dist(P, Q):
    return kernel_distance(ETA, gabor_kernel(GP, *_pts(P), *_pts(Q)))


def patch_fn(lam):
    ps = PatchSpec(lam)
    return lambda P, Q: patch_mask(ps, *_pts(P), *_pts(Q))


def graph(grid, lam=1.0):
    return build_patch_graph(grid.points(), patch_fn(lam), dist)


# --- axes and measures -------------------------------------------------------


def test_axis_symmetric_and_index():
    a = Axis.symmetric("x", 1.5, 0.1)
    assert a.count == 31 and a.min == pytest.approx(-1.5) and a.max == pytest.approx(1.5)
    assert a.index_of(0.0) == 15
    with pytest.raises(ValueError):
        a.index_of(0.05)
    with pytest.raises(ValueError):
        Axis.symmetric("x", 1.0, 0.3)
    with pytest.raises(ValueError):
        Axis("x", 0.0, 0.0, 3)


def test_periodic_axis_wraps():
    a = Axis.periodic_circle("theta", 8)
    assert a.index_of(np.pi) == 0
    assert a.index_of(-np.pi + 2 * np.pi / 8 + 2 * np.pi) == 1


def test_grid_cell_weight_example():
    g = FeatureGrid((Axis.symmetric("x", 1.5, 0.1), Axis.symmetric("y", 3.0, 0.1), Axis.symmetric("theta", 1.5, 0.15)))
    assert np.allclose(g.weights, 0.0015, rtol=1e-12)
    assert np.allclose(grid_cell_measure(g), 0.0015)


def test_one_dimensional_cell_weight():
    g = FeatureGrid((Axis.symmetric("x", 1.0, 0.2),))
    assert np.allclose(g.weights, 0.2)


def test_total_measure_is_grid_volume():
    axes = (Axis.symmetric("x", 1.0, 0.25), Axis.symmetric("y", 0.5, 0.1), Axis.periodic_circle("theta", 12))
    g = FeatureGrid(axes)
    vol = np.prod([a.max - a.min + a.step for a in axes])
    assert g.total_measure() == pytest.approx(vol, rel=1e-12)


def test_counting_measure_bank():
    w = counting_measure(128)
    assert np.all(w == 1) and w.sum() == 128
    g = FeatureGrid((Axis("f", 0, 1, 128),), weights=counting_measure(128))
    assert g.total_measure() == 128


def test_grid_rejects_bad_weights():
    with pytest.raises(ValueError):
        FeatureGrid((Axis("f", 0, 1, 3),), weights=[1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        FeatureGrid((Axis("f", 0, 1, 3), Axis("f", 0, 1, 2)))


def _nine_three_bank():
    # p1 with 8 close neighbours, p2 with 2, the clusters far apart
    rng = np.random.default_rng(3)
    c1 = np.concatenate([[0.0], 0.05 * rng.standard_normal(8)]) + 0j
    c2 = np.array([10.0, 10.04, 9.97]) + 0j
    pts = np.concatenate([c1, c2])
    return pts, 0, 9


def test_ball_measure_nine_and_three():
    pts, p1, p2 = _nine_three_bank()
    w = counting_measure(len(pts))
    d = lambda p, q: abs(p - q)
    assert ball_measure_fn(pts, w, pts[p1], 0.5, d) == 9
    assert ball_measure_fn(pts, w, pts[p2], 0.5, d) == 3


def test_ball_measure_extremes():
    pts, p1, _ = _nine_three_bank()
    w = counting_measure(len(pts))
    d = np.abs(pts - pts[p1])
    assert ball_measure(w, d, 1e-6) == 1
    assert ball_measure(w, d, 1e6) == len(pts)
    with pytest.raises(ValueError):
        ball_measure(w, d, 0.0)


@given(st.floats(1e-3, 20.0), st.floats(1e-3, 20.0))
def test_ball_measure_monotone(e1, e2):
    pts, p1, _ = _nine_three_bank()
    d = np.abs(pts - pts[p1])
    w = np.linspace(0.5, 2.0, len(pts))
    lo, hi = sorted((e1, e2))
    assert ball_measure(w, d, lo) <= ball_measure(w, d, hi)


# --- glued distance ---------------------------------------------------------------


@pytest.fixture(scope="module")
def grid5():
    return small_grid()


@pytest.fixture(scope="module")
def pg5(grid5):
    return graph(grid5)


@pytest.fixture(scope="module")
def all_pairs(pg5):
    return np.stack([glued_distances(pg5, s) for s in range(pg5.size)])


def test_identity(pg5):
    for p in range(0, pg5.size, 17):
        assert glued_distance(pg5, p, p) == 0.0


def test_graph_has_no_self_loops_and_nonnegative_weights(pg5):
    m = pg5.matrix
    assert np.all(m.diagonal() == 0)
    assert np.all(m.data > 0)


def test_matches_chain_enumeration(pg5, all_pairs):
    w = np.full((pg5.size, pg5.size), np.inf)
    coo = pg5.matrix.tocoo()
    w[coo.row, coo.col] = coo.data
    brute = chain_enumeration(w, 6)
    assert np.array_equal(brute, all_pairs)


def test_symmetric(pg5, all_pairs):
    m = pg5.matrix
    assert (m != 0).toarray().tolist() == (m.T != 0).toarray().tolist()
    # chain sums in opposite directions differ only by rounding
    assert np.array_equal(np.isinf(all_pairs), np.isinf(all_pairs.T))
    assert np.allclose(all_pairs, all_pairs.T, rtol=1e-12, atol=0)


def test_triangle_inequality(all_pairs):
    n = len(all_pairs)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        i, j, k = rng.integers(n, size=3)
        assert all_pairs[i, k] <= all_pairs[i, j] + all_pairs[j, k] + 1e-12


def test_bounded_by_local_distance_inside_patch(grid5, all_pairs):
    pts = grid5.points()
    P, Q = pts[:, None, :], pts[None, :, :]
    inside = patch_fn(1.0)(P, Q)
    d = dist(P, Q)
    assert np.all(all_pairs[inside] <= d[inside] + 1e-15)


def test_one_edge_chain_optimal_gives_local_distance(grid5, pg5):
    pts = grid5.points()
    p0 = grid5.flat_index(x=0.0, y=0.0, theta=-np.pi)
    p = grid5.flat_index(x=0.25, y=0.0, theta=-np.pi)
    d = dist(pts[p], pts[p0])
    assert glued_distance(pg5, p, p0) == pytest.approx(d, rel=1e-12)


def test_unreachable_is_inf():
    # two far-apart features with a narrow patch have no chain
    pts = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    pg = build_patch_graph(pts, patch_fn(0.1), dist)
    assert glued_distance(pg, 1, 0) == np.inf


def test_wider_patch_never_increases_distance(grid5):
    prev = None
    for lam in (0.3, 0.6, 1.0, 2.0):
        pg = graph(grid5, lam)
        cur = np.stack([glued_distances(pg, s) for s in range(0, pg.size, 7)])
        if prev is not None:
            assert np.all(cur <= prev + 1e-15)
        prev = cur
