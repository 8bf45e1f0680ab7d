import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opfr import GeometryError, NeighborIndex
from opfr.synth import ShapeSpec, equal_area_templates, generate, make_toy_dataset
from oracles import brute_knn, quadric_mean_curvature


def test_plane():
    s = generate(ShapeSpec("plane", count=500, extent=2.0, seed=1))
    assert np.all(s.cloud.points[:, 2] == 0)
    assert np.all(np.abs(s.cloud.points[:, :2]) <= 2.0)
    assert np.array_equal(s.normals, np.tile([0, 0, 1.0], (500, 1)))
    assert np.all(s.mean_curvature == 0)


@pytest.mark.parametrize("radius", [0.3, 1.0, 4.0])
def test_sphere_on_surface(radius):
    s = generate(ShapeSpec("sphere", count=700, radius=radius, seed=2))
    r = np.linalg.norm(s.cloud.points, axis=1)
    assert np.max(np.abs(r - radius)) <= 1e-12 * radius
    assert np.allclose(s.normals * radius, s.cloud.points, atol=1e-12)
    assert np.all(s.mean_curvature == 1 / radius)


def test_cylinder():
    s = generate(ShapeSpec("cylinder", count=400, radius=0.5, extent=1.5, seed=3))
    p = s.cloud.points
    assert np.allclose(np.hypot(p[:, 0], p[:, 1]), 0.5, atol=1e-12)
    assert np.all(np.abs(p[:, 2]) <= 1.5)
    assert np.all(s.normals[:, 2] == 0)
    assert np.allclose(s.mean_curvature, 1.0)


@pytest.mark.parametrize("dihedral", [45.0, 90.0, 135.0])
def test_corner_on_half_planes(dihedral):
    s = generate(ShapeSpec("corner", count=600, dihedral_deg=dihedral, seed=4))
    p, lab, nrm = s.cloud.points, s.labels, s.normals
    assert set(np.unique(lab)) == {0, 1}
    # each point lies on the plane of its own label, on the correct side of the hinge
    dist = np.einsum("ij,ij->i", p, nrm)
    assert np.max(np.abs(dist)) <= 1e-12
    a = math.radians(dihedral)
    inplane = np.where(lab == 0, p[:, 0], p[:, 0] * math.cos(a) + p[:, 2] * math.sin(a))
    assert np.all(inplane >= -1e-12)
    first = nrm[lab == 0]
    assert np.array_equal(first, np.tile([0, 0, 1.0], (len(first), 1)))


def test_noise_and_pose_are_seeded():
    spec = ShapeSpec("sphere", count=300, sigma=0.01, random_pose=True, seed=9)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.cloud.points, b.cloud.points)
    r = np.linalg.norm(a.cloud.points, axis=1)
    assert 0.002 < np.std(r - 1) < 0.03
    other = generate(ShapeSpec("sphere", count=300, sigma=0.01, random_pose=True, seed=10))
    assert not np.array_equal(a.cloud.points, other.cloud.points)


def test_random_pose_rotates_normals_with_points():
    s = generate(ShapeSpec("plane", count=200, random_pose=True, seed=5))
    n0 = s.normals[0]
    assert np.allclose(s.normals, n0, atol=1e-12)
    assert np.max(np.abs(s.cloud.points @ n0)) <= 1e-12


def test_even_sampling_spreads_points():
    plain = generate(ShapeSpec("sphere", count=512, seed=6)).cloud.points
    even = generate(ShapeSpec("sphere", count=512, seed=6, even_factor=4)).cloud.points

    def min_gap(p):
        return min(np.linalg.norm(p[brute_knn(p, q, 2)[1]] - q) for q in p)
    assert len(even) == 512
    assert np.allclose(np.linalg.norm(even, axis=1), 1.0, atol=1e-12)
    assert min_gap(even) > 3 * min_gap(plain)


@pytest.mark.parametrize("kw", [dict(kind="torus"), dict(kind="plane", count=8),
                                dict(kind="sphere", radius=0), dict(kind="plane", extent=-1),
                                dict(kind="plane", sigma=-0.1), dict(kind="plane", even_factor=0),
                                dict(kind="corner", dihedral_deg=180)])
def test_invalid_specs(kw):
    with pytest.raises(GeometryError):
        ShapeSpec(**kw)


def test_quadric_fit_recovers_sphere_curvature():
    for radius in (0.5, 1.0, 2.0):
        s = generate(ShapeSpec("sphere", count=4096, radius=radius, seed=11))
        idx = NeighborIndex(s.cloud)
        rng = np.random.default_rng(0)
        for i in rng.choice(4096, 20, replace=False):
            nb = idx.knn(s.cloud.points[i], 30)
            H = quadric_mean_curvature(s.cloud.points[nb], s.cloud.points[i], s.normals[i])
            assert H == pytest.approx(1 / radius, rel=0.05)


def test_equal_area_templates():
    t = equal_area_templates()
    assert [x.kind for x in t] == ["plane", "sphere", "cylinder", "corner"]
    areas = [(2 * t[0].extent) ** 2, 4 * math.pi * t[1].radius ** 2,
             2 * math.pi * t[2].radius * 2 * t[2].extent, 2 * t[3].extent * 2 * t[3].extent]
    assert np.allclose(areas, 4.0)
    assert all(x.count == 256 and x.random_pose for x in t)


def test_toy_dataset_split_and_determinism():
    a = make_toy_dataset(n_per_class=10, seed=3)
    b = make_toy_dataset(n_per_class=10, seed=3)
    assert len(a.train) == 32 and len(a.test) == 8
    assert [l for _, l in a.train].count(2) == 8
    assert a.class_names == ("plane", "sphere", "cylinder", "corner")
    for (ca, la), (cb, lb) in zip(a.train + a.test, b.train + b.test):
        assert la == lb and np.array_equal(ca.points, cb.points)
    c = make_toy_dataset(n_per_class=10, seed=4)
    assert not np.array_equal(a.train[0][0].points, c.train[0][0].points)


def test_default_toy_size():
    d = make_toy_dataset(n_per_class=200)
    assert len(d.train) == 640 and len(d.test) == 160


def test_toy_dataset_errors():
    with pytest.raises(GeometryError):
        make_toy_dataset(equal_area_templates()[:1])
    with pytest.raises(GeometryError):
        make_toy_dataset(n_per_class=1)
    with pytest.raises(GeometryError):
        make_toy_dataset(split=1.0)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["plane", "sphere", "cylinder", "corner"]), st.integers(16, 200),
       st.integers(0, 2**31), st.integers(1, 3))
def test_property_generate_shapes(kind, count, seed, even):
    s = generate(ShapeSpec(kind, count=count, seed=seed, even_factor=even))
    assert s.cloud.points.shape == (count, 3)
    assert s.normals.shape == (count, 3) and s.labels.shape == (count,)
    assert np.allclose(np.linalg.norm(s.normals, axis=1), 1.0, atol=1e-12)
    assert np.all(s.mean_curvature >= 0)
