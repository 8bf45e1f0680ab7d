"""Hierarchical sampling: k1-NN, FPS down to k2 centroids, k3-NN per centroid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import GeometryError
from .geom import NeighborIndex, PointCloud, fps_batch

K3_DOMAINS = ("cloud", "k1set")


@dataclass(frozen=True)
class SamplingConfig:
    k1: int = 20
    k2: int = 4
    k3: int = 8
    # where step 3 looks for centroid neighbors: the whole cloud or the k1 set only
    k3_domain: str = "cloud"
    # whether the interest point counts as its own nearest neighbor in step 1
    include_self: bool = True

    def validate(self, n: int) -> None:
        if self.k3_domain not in K3_DOMAINS:
            raise GeometryError(f"k3_domain must be one of {K3_DOMAINS}, got {self.k3_domain!r}")
        if not 1 <= self.k2 <= self.k1:
            raise GeometryError(f"need 1 <= k2 <= k1, got k1={self.k1}, k2={self.k2}")
        if self.k3 < 1:
            raise GeometryError(f"k3 must be >= 1, got {self.k3}")
        k1_avail = n if self.include_self else n - 1
        if self.k1 > k1_avail:
            raise GeometryError(
                f"k1={self.k1} exceeds the {k1_avail} candidate neighbors of a {n}-point cloud"
            )
        # centroids never list themselves among their k3 neighbors
        k3_avail = (n if self.k3_domain == "cloud" else self.k1) - 1
        if self.k3 > k3_avail:
            raise GeometryError(
                f"k3={self.k3} exceeds the {k3_avail} points available to each centroid "
                f"(k3_domain={self.k3_domain!r}, cloud size {n})"
            )

    @property
    def pairs_per_point(self) -> int:
        return self.k2 * self.k3


@dataclass(frozen=True)
class HierarchicalSample:
    interest_index: int
    neighborhood: np.ndarray        # (k1,) step-1 neighbors, nearest first
    centroid_indices: np.ndarray    # (k2,)
    cluster_neighbors: np.ndarray   # (k2, k3), each row nearest first


@dataclass(frozen=True)
class SampleBatch:
    """Array form of :func:`sample_all`; row i belongs to point i."""

    neighborhoods: np.ndarray       # (N, k1)
    centroids: np.ndarray           # (N, k2)
    clusters: np.ndarray            # (N, k2, k3)

    def __len__(self):
        return self.centroids.shape[0]

    def __getitem__(self, i) -> HierarchicalSample:
        return HierarchicalSample(int(i), self.neighborhoods[i], self.centroids[i], self.clusters[i])

    def to_list(self) -> List[HierarchicalSample]:
        return [self[i] for i in range(len(self))]


def _drop_self(cand: np.ndarray, owners: np.ndarray, k: int) -> np.ndarray:
    """Remove each row's owner index from ``cand`` and keep the first ``k``."""
    keep = cand != owners[:, None]
    # rows where the owner was absent drop their last (farthest) entry instead
    missing = keep.all(axis=1)
    keep[missing, -1] = False
    return cand[keep].reshape(cand.shape[0], -1)[:, :k]


def _sample_rows(cloud: PointCloud, index: NeighborIndex, rows: np.ndarray,
                 cfg: SamplingConfig) -> SampleBatch:
    pts = cloud.points
    if cfg.include_self:
        nbhd = index.knn_batch(pts[rows], cfg.k1)
        # a duplicate with lower index may precede the point itself
        pos = np.argmax(nbhd == rows[:, None], axis=1)
        pos[~(nbhd == rows[:, None]).any(axis=1)] = 0
    else:
        nbhd = _drop_self(index.knn_batch(pts[rows], cfg.k1 + 1), rows, cfg.k1)
        pos = np.zeros(len(rows), dtype=np.int64)
    local = fps_batch(pts[nbhd], cfg.k2, pos)
    centroids = np.take_along_axis(nbhd, local, axis=1)
    flat = centroids.reshape(-1)
    if cfg.k3_domain == "cloud":
        cand = index.knn_batch(pts[flat], cfg.k3 + 1)
        clusters = _drop_self(cand, flat, cfg.k3)
    else:
        sets = np.repeat(nbhd, cfg.k2, axis=0)                     # (N*k2, k1)
        d2 = np.sum((pts[sets] - pts[flat][:, None, :]) ** 2, axis=-1)
        order = np.lexsort((sets, d2), axis=-1)
        cand = np.take_along_axis(sets, order, -1)[:, : cfg.k3 + 1]
        clusters = _drop_self(cand, flat, cfg.k3)
    return SampleBatch(nbhd, centroids, clusters.reshape(len(rows), cfg.k2, cfg.k3))


def hierarchical_sample(cloud: PointCloud, index: NeighborIndex, i: int,
                        cfg: SamplingConfig = SamplingConfig()) -> HierarchicalSample:
    """Cluster structure around interest point ``i``.

    The first centroid is the interest point itself (FPS is seeded there);
    the remaining ``k2 - 1`` are spread over the k1-neighborhood by FPS. Each
    centroid then gets its ``k3`` nearest points, excluding itself.
    """
    n = len(cloud)
    cfg.validate(n)
    if not 0 <= i < n:
        raise GeometryError(f"interest index {i} out of range for {n} points")
    batch = _sample_rows(cloud, index, np.array([i], dtype=np.int64), cfg)
    return HierarchicalSample(i, batch.neighborhoods[0], batch.centroids[0], batch.clusters[0])


def sample_arrays(cloud: PointCloud, cfg: SamplingConfig = SamplingConfig(),
                  index: Optional[NeighborIndex] = None) -> SampleBatch:
    cfg.validate(len(cloud))
    if index is None:
        index = NeighborIndex(cloud)
    return _sample_rows(cloud, index, np.arange(len(cloud), dtype=np.int64), cfg)


def sample_all(cloud: PointCloud, cfg: SamplingConfig = SamplingConfig(),
               index: Optional[NeighborIndex] = None) -> List[HierarchicalSample]:
    """One :class:`HierarchicalSample` per point, in cloud order."""
    return sample_arrays(cloud, cfg, index).to_list()
