import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from opfr import GeometryError, NeighborIndex, PointCloud, build_index, fps, knn
from oracles import brute_knn, greedy_fps


def test_single_point_index():
    idx = build_index(PointCloud([[1.0, 2.0, 3.0]]))
    assert idx.size == 1
    assert list(knn(idx, [0, 0, 0], 1)) == [0]


def test_empty_and_nonfinite_rejected():
    with pytest.raises(GeometryError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(GeometryError):
        PointCloud([[0.0, np.nan, 0.0]])
    with pytest.raises(GeometryError):
        PointCloud([[0.0, 0.0, 0.0]], normals=[[0.0, 0.0, 2.0]])


def test_cloud_is_read_only():
    c = PointCloud(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        c.points[0, 0] = 1.0


@pytest.mark.parametrize("k", [1, 8, 20])
def test_knn_matches_brute_force_cube(rng, k):
    pts = rng.uniform(size=(1000, 3))
    idx = build_index(PointCloud(pts))
    for q in rng.uniform(size=(25, 3)):
        assert list(knn(idx, q, k)) == brute_knn(pts, q, k)


def test_knn_batch_matches_brute_force(rng):
    pts = rng.uniform(size=(100, 3))
    idx = build_index(pts)
    qs = rng.uniform(-0.2, 1.2, size=(40, 3))
    for k in (1, 5, 37, 100):
        got = idx.knn_batch(qs, k)
        for q, row in zip(qs, got):
            assert list(row) == brute_knn(pts, q, k)


def test_duplicates_both_retrievable():
    pts = [[0, 0, 0], [1, 0, 0], [1, 0, 0], [5, 5, 5]]
    idx = build_index(pts)
    assert list(idx.knn([1, 0, 0], 2)) == [1, 2]


def test_collinear_order_and_self_inclusion():
    pts = [[float(i), 0, 0] for i in range(4)]
    assert list(knn(build_index(pts), [0, 0, 0], 2)) == [0, 1]


def test_tie_broken_by_lower_index():
    pts = np.full((10, 3), 50.0)
    pts[5] = [1.0, 0, 0]
    pts[9] = [-1.0, 0, 0]
    assert list(knn(build_index(pts), [0, 0, 0], 1)) == [5]
    assert list(knn(build_index(pts), [0, 0, 0], 2)) == [5, 9]


def test_lattice_ties_resolved_like_brute_force():
    g = np.arange(6, dtype=float)
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    idx = build_index(pts)
    for q in pts[::17]:
        for k in (6, 7, 19, 27):
            assert list(idx.knn(q, k)) == brute_knn(pts, q, k)


def test_k_too_large_names_both_numbers():
    idx = build_index(np.zeros((3, 3)))
    with pytest.raises(GeometryError, match=r"k=4.*3 points"):
        idx.knn([0, 0, 0], 4)


def test_knn_exact_on_100_random_clouds():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(10, 2001))
        pts = rng.normal(size=(n, 3)) * rng.uniform(0.1, 10)
        idx = build_index(pts)
        q = rng.normal(size=3)
        k = int(rng.integers(1, min(n, 40) + 1))
        assert set(idx.knn(q, k)) == set(brute_knn(pts, q, k))


def test_knn_translation_invariant(rng):
    pts = rng.uniform(size=(300, 3))
    t = np.array([3.0, -7.5, 0.25])
    a, b = build_index(pts), build_index(pts + t)
    for q in rng.uniform(size=(20, 3)):
        assert list(a.knn(q, 10)) == list(b.knn(q + t, 10))


def test_fps_square_corners():
    sq = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]
    assert list(fps(sq, 2, 0)) == [0, 2]


def test_fps_full_is_permutation(rng):
    pts = rng.normal(size=(30, 3))
    assert sorted(fps(pts, 30, 4)) == list(range(30))


def test_fps_matches_greedy_oracle_stepwise(rng):
    pts = rng.normal(size=(50, 3))
    got = list(fps(pts, 10, 3))
    want, gaps = greedy_fps(pts, 10, 3)
    assert got == want
    # the chosen point attains the max of min-distances at every step
    for step in range(1, 10):
        chosen = got[:step]
        mind = [min(np.sum((pts[j] - pts[c]) ** 2) for c in chosen)
                for j in range(50) if j not in chosen]
        assert gaps[step - 1] == pytest.approx(max(mind), rel=0, abs=0)


def test_fps_tie_lowest_index():
    pts = [[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0]]
    assert list(fps(pts, 2, 0)) == [0, 1]


def test_fps_duplicates_never_reselected():
    pts = np.zeros((5, 3))
    assert sorted(fps(pts, 5, 2)) == [0, 1, 2, 3, 4]


def test_fps_errors():
    with pytest.raises(GeometryError):
        fps(np.zeros((3, 3)), 4)
    with pytest.raises(GeometryError):
        fps(np.zeros((3, 3)), 2, seed_index=3)


def test_transformed_cloud(rng):
    c = PointCloud(rng.normal(size=(5, 3)))
    t = c.transformed(translation=[1, 2, 3], scale=2.0)
    assert np.allclose(t.points, 2 * c.points + [1, 2, 3])


coords = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 60), st.just(3)), elements=coords),
       st.integers(1, 60), st.data())
def test_property_knn_equals_brute(pts, k, data):
    k = min(k, len(pts))
    q = data.draw(arrays(np.float64, 3, elements=coords))
    assert list(NeighborIndex(PointCloud(pts)).knn(q, k)) == brute_knn(pts, q, k)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.just(3)), elements=coords),
       st.data())
def test_property_fps_prefix(pts, data):
    n = len(pts)
    seed = data.draw(st.integers(0, n - 1))
    k1 = data.draw(st.integers(1, n))
    k2 = data.draw(st.integers(k1, n))
    assert list(fps(pts, k2, seed)[:k1]) == list(fps(pts, k1, seed))
    assert fps(pts, k1, seed)[0] == seed
