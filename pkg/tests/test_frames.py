import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opfr import (DegenerateFrame, DegeneratePair, InsufficientNeighbors, approx_frame,
                  exact_frame, order_neighbors)
from opfr.frames import approx_frames_sorted, exact_frames
from oracles import cross, exact_frame_ref, z_rotation

S3 = np.sqrt(3.0) / 2


def test_exact_axis_aligned():
    f = exact_frame([0, 0, 0], [1, 0, 0], [0, 0, 1])
    assert np.allclose(f.u, [0, 0, 1])
    assert np.allclose(f.v, [0, -1, 0])
    assert np.allclose(f.w, [1, 0, 0])


def test_exact_parallel_and_coincident():
    with pytest.raises(DegenerateFrame):
        exact_frame([0, 0, 0], [0, 0, 2], [0, 0, 1])
    with pytest.raises(DegeneratePair):
        exact_frame([1, 1, 1], [1, 1, 1], [0, 0, 1])


def test_exact_frames_orthonormal_right_handed_1e4():
    rng = np.random.default_rng(1)
    n = rng.normal(size=(10_000, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    xi, xj = rng.normal(size=(2, 10_000, 3))
    u, v, w, status = exact_frames(xi, xj, n)
    assert np.all(status == 0)
    F = np.stack([u, v, w], axis=1)
    gram = F @ F.transpose(0, 2, 1)
    assert np.max(np.abs(gram - np.eye(3))) < 1e-9
    assert np.max(np.abs(np.linalg.det(F) - 1.0)) < 1e-9
    for r in range(0, 10_000, 997):
        ref = exact_frame_ref(xi[r], xj[r], n[r])
        assert np.allclose(F[r], np.stack(ref), atol=1e-12)


def test_order_sort():
    nb = [[0, 1, 0], [1, 0, 0], [0, -1, 0], [-1, 0, 0]]    # 90, 0, 270, 180 degrees
    o = order_neighbors([0, 0, 0], nb)
    assert list(o.order) == [1, 0, 3, 2]
    ang = np.degrees(np.arctan2(o.neighbors[:, 1], o.neighbors[:, 0])) % 360
    assert list(ang) == [0, 90, 180, 270]


def test_order_vertical_line_keeps_input_order():
    nb = [[0, 0, 3], [0, 0, -1], [0, 0, 2], [0, 0, 5]]
    assert list(order_neighbors([0, 0, 0], nb).order) == [0, 1, 2, 3]


def test_order_zero_radius_last():
    nb = [[0, 0, 1], [1, 0, 0], [0, 1, 0]]
    assert list(order_neighbors([0, 0, 0], nb).order) == [1, 2, 0]


def test_order_needs_three():
    with pytest.raises(InsufficientNeighbors):
        order_neighbors([0, 0, 0], [[1, 0, 0], [0, 1, 0]])


def test_approx_120_degree_case():
    nb = [[1, 0, 0], [-0.5, S3, 0], [-0.5, -S3, 0]]
    o = order_neighbors([0, 0, 0], nb)
    j = int(np.flatnonzero(o.order == 0)[0])
    f = approx_frame(o, j)
    assert np.allclose(f.u, [-0.5, S3, 0], atol=1e-12)
    assert np.allclose(f.v, [-0.5, -S3, 0], atol=1e-12)
    assert np.allclose(f.w, [0, 0, 1], atol=1e-12)


def test_approx_antipodal_is_degenerate():
    nb = [[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
    o = order_neighbors([0, 0, 0], nb)
    for j in range(4):
        with pytest.raises(DegenerateFrame):
            approx_frame(o, j)


def test_approx_coincident_neighbor():
    nb = [[0, 0, 0], [1, 0, 0.1], [0, 1, 0.2], [-1, -1, 0]]
    o = order_neighbors([0, 0, 0], nb)
    zero_pos = int(np.flatnonzero(o.order == 0)[0])
    with pytest.raises(DegeneratePair):
        approx_frame(o, (zero_pos + 1) % 4)


def test_outward_orientation():
    # center above its ring: w must point up (away from the neighbors' mean)
    ring = [[np.cos(a), np.sin(a), 0.0] for a in np.linspace(0, 2 * np.pi, 5, endpoint=False)]
    up = order_neighbors([0, 0, 0.3], ring)
    down = order_neighbors([0, 0, -0.3], ring)
    for j in range(5):
        assert approx_frame(up, j).w[2] > 0
        assert approx_frame(down, j).w[2] < 0


def _random_neighborhoods(rng, m, k=8):
    centers = rng.normal(size=(m, 3))
    nbrs = centers[:, None, :] + rng.normal(size=(m, k, 3))
    return centers, nbrs


def _sorted(centers, nbrs):
    from opfr.frames import angular_order
    order = angular_order(centers, nbrs)
    return np.take_along_axis(nbrs, order[..., None], axis=-2), order


def test_approx_w_orthogonal_to_u_v():
    rng = np.random.default_rng(3)
    c, nb = _random_neighborhoods(rng, 1000)
    s, _ = _sorted(c, nb)
    u, v, w, status = approx_frames_sorted(c, s)
    ok = status == 0
    assert ok.mean() > 0.99
    assert np.max(np.abs(np.einsum("...i,...i", w, u)[ok])) < 1e-9
    assert np.max(np.abs(np.einsum("...i,...i", w, v)[ok])) < 1e-9
    assert np.max(np.abs(np.linalg.norm(w[ok], axis=-1) - 1)) < 1e-9
    # same direction as the plain cross product, up to the orientation sign
    ref = np.array([cross(a, b) for a, b in zip(u[ok][:200], v[ok][:200])])
    ref /= np.linalg.norm(ref, axis=1, keepdims=True)
    assert np.allclose(np.abs(np.einsum("ij,ij->i", ref, w[ok][:200])), 1.0, atol=1e-12)


def test_z_rotation_equivariance_and_translation_invariance():
    rng = np.random.default_rng(4)
    c, nb = _random_neighborhoods(rng, 1000)
    s, order = _sorted(c, nb)
    u, v, w, st_ = approx_frames_sorted(c, s)
    for theta, t in [(0.7, [0, 0, 0]), (2.9, [5.0, -3.0, 1.5]), (-1.3, [0.1, 0.2, -9.0])]:
        R = z_rotation(theta)
        c2, nb2 = c @ R.T + t, nb @ R.T + t
        s2, order2 = _sorted(c2, nb2)
        u2, v2, w2, st2 = approx_frames_sorted(c2, s2)
        for m in range(len(c)):
            # cyclic order is preserved: order2 is a rotation of order
            shift = int(np.flatnonzero(order2[m] == order[m][0])[0])
            assert np.array_equal(np.roll(order2[m], -shift), order[m])
            assert np.array_equal(np.roll(st2[m], -shift), st_[m])
            ok = st_[m] == 0
            for a, b in ((u, u2), (v, v2), (w, w2)):
                assert np.allclose(np.roll(b[m], -shift, axis=0)[ok], a[m][ok] @ R.T, atol=1e-9)


def test_scale_invariance():
    rng = np.random.default_rng(5)
    c, nb = _random_neighborhoods(rng, 200)
    s, _ = _sorted(c, nb)
    a = approx_frames_sorted(c, s)
    b = approx_frames_sorted(3.5 * c, 3.5 * s)
    for x, y in zip(a[:3], b[:3]):
        assert np.allclose(x, y, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10)),
                min_size=3, max_size=12))
def test_property_approx_frames_well_formed(nb):
    nb = np.array(nb, dtype=float)
    s, _ = _sorted(np.zeros((1, 3)), nb[None])
    u, v, w, status = approx_frames_sorted(np.zeros((1, 3)), s)
    assert np.all(np.isfinite(w))
    ok = status[0] == 0
    if ok.any():
        assert np.allclose(np.linalg.norm(w[0][ok], axis=-1), 1.0, atol=1e-9)
        assert np.max(np.abs(np.einsum("ij,ij->i", w[0][ok], u[0][ok]))) < 1e-9
    assert np.all(w[0][~ok] == 0)
