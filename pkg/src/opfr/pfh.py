"""Vanilla Point Feature Histogram baseline.

PCA normals, a Darboux frame per point pair, three angles per pair and a
joint histogram over every unordered pair inside a point's neighborhood.
This is deliberately the full quadratic formulation, not FPFH.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import DegenerateFrame, DegeneratePair, GeometryError, NormalUndefined
from .frames import OK, PAIR_DEGENERATE, exact_frames
from .geom import NeighborIndex, PointCloud, as_point, as_points

# smallest-but-one eigenvalue below this fraction of the largest => rank deficient
_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class PfhConfig:
    k: int = 16
    bins_per_angle: int = 5

    def __post_init__(self):
        if self.k < 3:
            raise GeometryError(f"PFH needs k >= 3, got {self.k}")
        if self.bins_per_angle < 2:
            raise GeometryError(f"bins_per_angle must be >= 2, got {self.bins_per_angle}")

    @property
    def n_bins(self) -> int:
        return self.bins_per_angle ** 3


@dataclass(frozen=True)
class PfhDescriptor:
    histogram: np.ndarray   # raw pair counts, length bins_per_angle**3
    n_scored: int
    n_skipped: int

    def normalized(self) -> np.ndarray:
        if self.n_scored == 0:
            return np.zeros_like(self.histogram)
        return self.histogram / self.n_scored


def orient_up(normals: np.ndarray) -> np.ndarray:
    """Flip normals toward a viewpoint at +z infinity.

    Exact ties fall back to +x, then +y.
    """
    n = np.array(normals, dtype=np.float64, copy=True)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    flip = (z < 0) | ((z == 0) & ((x < 0) | ((x == 0) & (y < 0))))
    n[flip] *= -1.0
    return n


def _pca_normals(nbhd_points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    centered = nbhd_points - nbhd_points.mean(axis=-2, keepdims=True)
    cov = np.einsum("...ki,...kj->...ij", centered, centered)
    evals, evecs = np.linalg.eigh(cov)
    normals = orient_up(evecs[..., :, 0])
    undefined = evals[..., 1] <= _RANK_RTOL * np.maximum(evals[..., 2], 1e-300)
    return normals, undefined


def pca_normal(neighborhood) -> np.ndarray:
    """Normal of a single neighborhood; raises NormalUndefined when rank deficient."""
    pts = as_points(neighborhood)
    if pts.shape[0] < 3:
        raise NormalUndefined(f"need at least 3 points, got {pts.shape[0]}")
    n, bad = _pca_normals(pts)
    if bad:
        raise NormalUndefined("neighborhood is collinear or coincident")
    return n


def estimate_normals(cloud: PointCloud, k: int = 16,
                     index: Optional[NeighborIndex] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-point PCA normals over the k nearest points (self included).

    Returns ``(normals, undefined)``; undefined rows are NaN.
    """
    if k < 3:
        raise GeometryError(f"normal estimation needs k >= 3, got {k}")
    if k > len(cloud):
        raise GeometryError(f"k={k} exceeds cloud size {len(cloud)}")
    if index is None:
        index = NeighborIndex(cloud)
    nbr = index.knn_batch(cloud.points, k)
    normals, undefined = _pca_normals(cloud.points[nbr])
    normals[undefined] = np.nan
    return normals, undefined


def _canonical_pairs(p1, n1, p2, n2):
    """Order each pair so the source normal is closer to the connecting line."""
    d = p2 - p1
    dn = np.linalg.norm(d, axis=-1, keepdims=True)
    dhat = d / np.where(dn > 0, dn, 1.0)
    c1 = np.abs(np.sum(n1 * dhat, axis=-1))
    c2 = np.abs(np.sum(n2 * dhat, axis=-1))
    # exact ties go to the lexicographically smaller point
    swap = (c2 > c1) | ((c1 == c2) & _lex_less(p2, p1))
    sw = swap[..., None]
    ps = np.where(sw, p2, p1)
    ns = np.where(sw, n2, n1)
    pt = np.where(sw, p1, p2)
    nt = np.where(sw, n1, n2)
    return ps, ns, pt, nt


def _lex_less(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    less = a[..., 2] < b[..., 2]
    for ax in (1, 0):
        less = (a[..., ax] < b[..., ax]) | ((a[..., ax] == b[..., ax]) & less)
    return less


def darboux_batch(p1, n1, p2, n2):
    """(alpha, phi, theta, status) for stacked point pairs."""
    ps, ns, pt, nt = _canonical_pairs(p1, n1, p2, n2)
    u, v, w, status = exact_frames(ps, pt, ns)
    d = pt - ps
    dn = np.linalg.norm(d, axis=-1)
    dhat = d / np.where(dn > 0, dn, 1.0)[..., None]
    alpha = np.sum(v * nt, axis=-1)
    phi = np.sum(u * dhat, axis=-1)
    theta = np.arctan2(np.sum(w * nt, axis=-1), np.sum(u * nt, axis=-1))
    return alpha, phi, theta, status


def darboux_angles(p_s, n_s, p_t, n_t) -> Tuple[float, float, float]:
    """The three PFH angles of an oriented point pair.

    The source is whichever point's normal makes the smaller angle with the
    connecting line, so argument order does not matter.
    """
    p_s, n_s, p_t, n_t = (as_point(a) for a in (p_s, n_s, p_t, n_t))
    a, f, t, st = darboux_batch(p_s[None], n_s[None], p_t[None], n_t[None])
    if st[0] == PAIR_DEGENERATE:
        raise DegeneratePair("pair points coincide")
    if st[0] != OK:
        raise DegenerateFrame("connecting line is parallel to the source normal")
    return float(a[0]), float(f[0]), float(t[0])


def angle_bins(alpha, phi, theta, bins: int) -> np.ndarray:
    """Joint bin index in [0, bins**3) for each angle triple."""
    def q(x, lo, hi):
        b = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
        return np.clip(b, 0, bins - 1)
    ia = q(alpha, -1.0, 1.0)
    ip = q(phi, -1.0, 1.0)
    it = q(theta, -np.pi, np.pi)
    return (ia * bins + ip) * bins + it


def _histograms(points: np.ndarray, normals: np.ndarray, nbr: np.ndarray,
                cfg: PfhConfig) -> List[PfhDescriptor]:
    m = nbr.shape[1]
    a_idx, b_idx = np.triu_indices(m, 1)
    ia, ib = nbr[:, a_idx], nbr[:, b_idx]
    alpha, phi, theta, status = darboux_batch(points[ia], normals[ia], points[ib], normals[ib])
    scored = (status == OK) & np.isfinite(alpha) & np.isfinite(theta)
    bins = angle_bins(np.nan_to_num(alpha), np.nan_to_num(phi), np.nan_to_num(theta),
                      cfg.bins_per_angle)
    nb = cfg.n_bins
    rows = np.broadcast_to(np.arange(nbr.shape[0])[:, None], bins.shape)
    flat = (rows * nb + bins)[scored]
    hist = np.bincount(flat, minlength=nbr.shape[0] * nb).reshape(-1, nb).astype(np.float64)
    n_scored = scored.sum(axis=1)
    n_pairs = len(a_idx)
    return [PfhDescriptor(hist[r], int(n_scored[r]), int(n_pairs - n_scored[r]))
            for r in range(nbr.shape[0])]


def pfh_descriptor(cloud: PointCloud, normals, i: int, cfg: PfhConfig = PfhConfig(),
                   index: Optional[NeighborIndex] = None) -> PfhDescriptor:
    """Histogram over all pairs among point ``i`` and its k nearest neighbors."""
    if normals is None:
        raise GeometryError("PFH needs normals; run estimate_normals first")
    normals = np.asarray(normals, dtype=np.float64)
    if normals.shape != cloud.points.shape:
        raise GeometryError("normals must match the cloud shape")
    if cfg.k + 1 > len(cloud):
        raise GeometryError(f"k={cfg.k} needs at least {cfg.k + 1} points, cloud has {len(cloud)}")
    if index is None:
        index = NeighborIndex(cloud)
    nbr = index.knn_batch(cloud.points[i][None], cfg.k + 1)
    return _histograms(cloud.points, normals, nbr, cfg)[0]


def pfh_all(cloud: PointCloud, cfg: PfhConfig = PfhConfig(), normals=None,
            index: Optional[NeighborIndex] = None) -> List[PfhDescriptor]:
    """End-to-end baseline: normal estimation (unless given) plus every descriptor."""
    if cfg.k + 1 > len(cloud):
        raise GeometryError(f"k={cfg.k} needs at least {cfg.k + 1} points, cloud has {len(cloud)}")
    if index is None:
        index = NeighborIndex(cloud)
    if normals is None:
        normals, _ = estimate_normals(cloud, cfg.k, index)
    nbr = index.knn_batch(cloud.points, cfg.k + 1)
    return _histograms(cloud.points, np.asarray(normals, dtype=np.float64), nbr, cfg)


def descriptor_matrix(descs: List[PfhDescriptor], normalized: bool = False) -> np.ndarray:
    return np.stack([d.normalized() if normalized else d.histogram for d in descs])
