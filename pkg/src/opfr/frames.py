"""Local reference frames.

Two constructions live here:

* the exact Darboux-style frame used by PFH, anchored on a point normal;
* the normal-free approximated frame, built from the two angular neighbors of
  a pair endpoint inside a neighborhood ordered by projected xy-angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrame, DegeneratePair, InsufficientNeighbors
from .geom import as_point, as_points

EPS_DEGENERATE = 1e-12
# |w . d| below this fraction of |d| counts as "in-plane" for orientation
_ORIENT_RTOL = 1e-9

OK, PAIR_DEGENERATE, FRAME_DEGENERATE = 0, 1, 2


@dataclass(frozen=True)
class LocalFrame:
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def as_matrix(self) -> np.ndarray:
        """Rows u, v, w."""
        return np.stack([self.u, self.v, self.w])


@dataclass(frozen=True)
class OrderedNeighborhood:
    center: np.ndarray
    neighbors: np.ndarray   # (K, 3) in cyclic angular order
    order: np.ndarray       # neighbors[j] == original[order[j]]

    def __len__(self):
        return self.neighbors.shape[0]


def exact_frame(x_i, x_j, n_i) -> LocalFrame:
    """Frame u = n_i, v = (x_j - x_i) x u / |.|, w = u x v / |.|."""
    x_i, x_j, n_i = as_point(x_i), as_point(x_j), as_point(n_i)
    u, v, w, status = exact_frames(x_i[None], x_j[None], n_i[None])
    if status[0] == PAIR_DEGENERATE:
        raise DegeneratePair("x_j coincides with x_i")
    if status[0] == FRAME_DEGENERATE:
        raise DegenerateFrame("relative position is parallel to the normal")
    return LocalFrame(u[0], v[0], w[0])


def exact_frames(x_i: np.ndarray, x_j: np.ndarray, n_i: np.ndarray):
    """Vectorised :func:`exact_frame`; returns (u, v, w, status).

    Degenerate rows carry zero vectors and a nonzero status code.
    """
    d = x_j - x_i
    dn = np.linalg.norm(d, axis=-1)
    u = n_i / np.linalg.norm(n_i, axis=-1, keepdims=True)
    c = np.cross(d, u)
    cn = np.linalg.norm(c, axis=-1)
    status = np.where(dn < EPS_DEGENERATE, PAIR_DEGENERATE,
                      np.where(cn < EPS_DEGENERATE, FRAME_DEGENERATE, OK))
    ok = status == OK
    v = np.zeros_like(c)
    v[ok] = c[ok] / cn[ok, None]
    w = np.cross(u, v)
    wn = np.linalg.norm(w, axis=-1)
    w[ok] /= wn[ok, None]
    u = np.where(ok[..., None], u, 0.0)
    return u, v, w, status


def angular_order(centers: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Permutation sorting each neighbor row by projected xy-angle about its center.

    Exact angle ties keep input order; neighbors sitting straight above or
    below the center (zero projected radius) go last, in input order.
    """
    rel = neighbors - centers[..., None, :]
    dx, dy = rel[..., 0], rel[..., 1]
    # angles in [0, 2pi) so the cycle starts on the +x axis
    ang = np.where((dx == 0.0) & (dy == 0.0), np.inf, np.mod(np.arctan2(dy, dx), 2 * np.pi))
    pos = np.broadcast_to(np.arange(neighbors.shape[-2]), ang.shape)
    return np.lexsort((pos, ang), axis=-1)


def order_neighbors(center, neighbors) -> OrderedNeighborhood:
    c = as_point(center)
    nb = as_points(neighbors)
    if nb.shape[0] < 3:
        raise InsufficientNeighbors(f"need at least 3 neighbors, got {nb.shape[0]}")
    order = angular_order(c, nb)
    return OrderedNeighborhood(c, nb[order], order)


def orient_outward(w: np.ndarray, centers: np.ndarray, sorted_neighbors: np.ndarray) -> np.ndarray:
    """Flip frame normals so they point away from the neighborhood centroid.

    When the center lies (numerically) in the plane of ``w`` the global +z
    direction decides instead.
    """
    d = centers - sorted_neighbors.mean(axis=-2)
    s = np.einsum("...kj,...j->...k", w, d)
    dn = np.linalg.norm(d, axis=-1, keepdims=True)
    decisive = np.abs(s) > _ORIENT_RTOL * dn
    flip = np.where(decisive, s < 0, w[..., 2] < 0)
    return np.where(flip[..., None], -w, w)


def approx_frames_sorted(centers: np.ndarray, sorted_neighbors: np.ndarray):
    """Approximated frames for every position of already ordered neighborhoods.

    ``centers`` is (..., 3), ``sorted_neighbors`` is (..., K, 3). Returns
    (u, v, w, status) each shaped like ``sorted_neighbors`` (status drops the
    last axis). Position j uses its cyclic successor for u and predecessor
    for v.
    """
    K = sorted_neighbors.shape[-2]
    if K < 3:
        raise InsufficientNeighbors(f"need at least 3 neighbors, got {K}")
    c = centers[..., None, :]
    du = np.roll(sorted_neighbors, -1, axis=-2) - c
    dv = np.roll(sorted_neighbors, 1, axis=-2) - c
    nu = np.linalg.norm(du, axis=-1)
    nv = np.linalg.norm(dv, axis=-1)
    pair_bad = (nu < EPS_DEGENERATE) | (nv < EPS_DEGENERATE)
    u = du / np.where(pair_bad, 1.0, nu)[..., None]
    v = dv / np.where(pair_bad, 1.0, nv)[..., None]
    cr = np.cross(u, v)
    cn = np.linalg.norm(cr, axis=-1)
    status = np.where(pair_bad, PAIR_DEGENERATE,
                      np.where(cn < EPS_DEGENERATE, FRAME_DEGENERATE, OK))
    ok = status == OK
    w = cr / np.where(ok, cn, 1.0)[..., None]
    w = orient_outward(w, centers, sorted_neighbors)
    zero = ~ok[..., None]
    return (np.where(zero, 0.0, u), np.where(zero, 0.0, v), np.where(zero, 0.0, w), status)


def approx_frame(nbhd: OrderedNeighborhood, j: int) -> LocalFrame:
    """Approximated frame for the pair (center, neighbors[j])."""
    K = len(nbhd)
    if not -K <= j < K:
        raise IndexError(f"position {j} out of range for {K} neighbors")
    u, v, w, status = approx_frames_sorted(nbhd.center[None], nbhd.neighbors[None])
    st = status[0, j]
    if st == PAIR_DEGENERATE:
        raise DegeneratePair("an angular neighbor coincides with the center")
    if st == FRAME_DEGENERATE:
        raise DegenerateFrame("angular neighbors are (anti)parallel as seen from the center")
    return LocalFrame(u[0, j], v[0, j], w[0, j])
