"""Point cloud container, exact k-nearest-neighbor index and farthest point sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError

NORMAL_TOL = 1e-6
# relative gap below which the k-th and (k+1)-th candidate distances count as tied
_TIE_RTOL = 1e-9


def as_points(points) -> np.ndarray:
    """Coerce ``points`` to a finite float64 array of shape (N, 3)."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GeometryError(f"expected an (N, 3) array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("point coordinates must be finite (found NaN or Inf)")
    return arr


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise GeometryError(f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("point coordinates must be finite (found NaN or Inf)")
    return arr


@dataclass(frozen=True)
class PointCloud:
    """N points with optional unit normals.

    ``points`` is an (N, 3) float64 array; ``normals`` is either None or an
    (N, 3) array of unit vectors.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = as_points(self.points)
        if pts.shape[0] < 1:
            raise GeometryError("a point cloud needs at least one point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise GeometryError(
                    f"normals shape {nrm.shape} does not match points shape {pts.shape}"
                )
            if not np.all(np.isfinite(nrm)):
                raise GeometryError("normals must be finite")
            norms = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(norms - 1.0) > NORMAL_TOL):
                raise GeometryError("normals must have unit length (tolerance 1e-6)")
            nrm.setflags(write=False)
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return self.points.shape[0]

    def with_normals(self, normals) -> "PointCloud":
        return PointCloud(self.points, normals)

    def transformed(self, rotation=None, translation=None, scale: float = 1.0) -> "PointCloud":
        """Return ``scale * R @ p + t`` for every point; normals are rotated."""
        R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        pts = scale * self.points @ R.T + t
        nrm = None
        if self.normals is not None:
            nrm = self.normals @ R.T
            nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
        return PointCloud(pts, nrm)


def _sorted_by_distance(points: np.ndarray, queries: np.ndarray, cand: np.ndarray):
    """Sort candidate rows by (squared distance, index); returns (idx, d2)."""
    d2 = np.sum((points[cand] - queries[:, None, :]) ** 2, axis=-1)
    order = np.lexsort((cand, d2), axis=-1)
    return np.take_along_axis(cand, order, -1), np.take_along_axis(d2, order, -1)


class NeighborIndex:
    """Exact k-NN over a fixed cloud.

    Candidates come from a balanced k-d tree; distances are recomputed and
    ties are broken by ascending point index, so answers are identical to an
    exhaustive scan. Immutable after construction and safe for concurrent
    read-only queries.
    """

    def __init__(self, cloud, workers: int = 1):
        pts = cloud.points if isinstance(cloud, PointCloud) else as_points(cloud)
        if pts.shape[0] < 1:
            raise GeometryError("cannot build a neighbor index over an empty cloud")
        self._points = pts
        self._tree = cKDTree(pts, balanced_tree=True, compact_nodes=True)
        self.workers = workers

    @property
    def size(self) -> int:
        return self._points.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self._points

    def _check_k(self, k: int):
        if k < 1:
            raise GeometryError(f"k must be >= 1, got {k}")
        if k > self.size:
            raise GeometryError(
                f"requested k={k} neighbors but the cloud has only {self.size} points"
            )

    def knn(self, query, k: int) -> np.ndarray:
        """Indices of the ``k`` nearest points to ``query``, nearest first."""
        return self.knn_batch(as_point(query)[None, :], k)[0]

    def knn_batch(self, queries, k: int) -> np.ndarray:
        """Row-wise :meth:`knn` for an (M, 3) array of queries."""
        self._check_k(k)
        q = as_points(queries)
        n = self.size
        m = min(k + 1, n)
        _, cand = self._tree.query(q, k=np.arange(1, m + 1), workers=self.workers)
        cand = np.asarray(cand, dtype=np.int64)
        idx, d2 = _sorted_by_distance(self._points, q, cand)
        out = idx[:, :k].copy()
        if m > k:
            gap = d2[:, k] - d2[:, k - 1]
            ambiguous = np.flatnonzero(gap <= _TIE_RTOL * np.maximum(d2[:, k], 1e-300))
            for r in ambiguous:
                out[r] = self._brute(q[r], k)
        return out

    def _brute(self, query: np.ndarray, k: int) -> np.ndarray:
        d2 = np.sum((self._points - query) ** 2, axis=1)
        order = np.lexsort((np.arange(self.size), d2))
        return order[:k]


def build_index(cloud, workers: int = 1) -> NeighborIndex:
    return NeighborIndex(cloud, workers=workers)


def knn(index: NeighborIndex, query, k: int) -> np.ndarray:
    return index.knn(query, k)


def fps(points, k: int, seed_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling.

    Starts at ``seed_index`` and repeatedly adds the point whose minimum
    distance to the selected set is largest (lowest index wins ties).
    """
    pts = as_points(points)
    return fps_batch(pts[None], k, np.array([seed_index]))[0]


def fps_batch(points: np.ndarray, k: int, seeds) -> np.ndarray:
    """Vectorised :func:`fps` over a (B, P, 3) stack of point sets."""
    pts = np.asarray(points, dtype=np.float64)
    B, P, _ = pts.shape
    seeds = np.asarray(seeds, dtype=np.int64).reshape(B)
    if k < 1 or k > P:
        raise GeometryError(f"fps needs 1 <= k <= {P}, got k={k}")
    if np.any((seeds < 0) | (seeds >= P)):
        raise GeometryError(f"fps seed index out of range [0, {P})")
    rows = np.arange(B)
    out = np.empty((B, k), dtype=np.int64)
    out[:, 0] = seeds
    selected = np.zeros((B, P), dtype=bool)
    selected[rows, seeds] = True
    mind = np.sum((pts - pts[rows, seeds][:, None, :]) ** 2, axis=-1)
    for step in range(1, k):
        # selected points must never win, even when duplicates leave mind == 0
        masked = np.where(selected, -np.inf, mind)
        nxt = np.argmax(masked, axis=1)
        out[:, step] = nxt
        selected[rows, nxt] = True
        d = np.sum((pts - pts[rows, nxt][:, None, :]) ** 2, axis=-1)
        np.minimum(mind, d, out=mind)
    return out
