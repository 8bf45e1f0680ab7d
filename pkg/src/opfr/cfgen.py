"""Curve feature generator: 9-d explicit geometry per point pair.

Each pair contributes ``[rel_pos (3), orientation (3), curvature_proxy (3)]``
where the curvature proxy holds the angles between the frame axes and the
pair direction, divided by the pair length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import DegeneratePair, GeometryError
from .frames import OK, LocalFrame, angular_order, approx_frames_sorted
from .geom import NeighborIndex, PointCloud, as_point
from .sampling import HierarchicalSample, SamplingConfig, sample_arrays

FEATURE_DIM = 9
FEATURE_NAMES = ("dx", "dy", "dz", "nx", "ny", "nz", "pu", "pv", "pw")
ANCHORS = ("centroid", "interest")


@dataclass(frozen=True)
class PairGeometry:
    rel_pos: np.ndarray
    orientation: np.ndarray
    curvature_proxy: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rel_pos, self.orientation, self.curvature_proxy])


@dataclass(frozen=True)
class PairFeatureSet:
    """Pair features with their degeneracy mask.

    ``features`` is (..., K, 9); masked rows are all-zero sentinels.
    """

    features: np.ndarray
    degenerate: np.ndarray

    @property
    def n_degenerate(self) -> int:
        return int(self.degenerate.sum())

    def as_pairs(self) -> List[PairGeometry]:
        rows = self.features.reshape(-1, FEATURE_DIM)
        return [PairGeometry(r[:3], r[3:6], r[6:]) for r in rows]


def curvature_proxy(axes: np.ndarray, rel: np.ndarray, rel_norm: np.ndarray) -> np.ndarray:
    """arccos(axis . rel/|rel|) / |rel| for each of the stacked axes.

    ``axes`` is (..., 3 axes, 3); ``rel`` is (..., 3); ``rel_norm`` is (...).
    """
    unit = rel / rel_norm[..., None]
    cos = np.einsum("...aj,...j->...a", axes, unit)
    return np.arccos(np.clip(cos, -1.0, 1.0)) / rel_norm[..., None]


def pair_geometry(x_i, x_ij, frame: LocalFrame) -> PairGeometry:
    x_i, x_ij = as_point(x_i), as_point(x_ij)
    rel = x_ij - x_i
    rn = np.linalg.norm(rel)
    if rn < 1e-12:
        raise DegeneratePair("pair points coincide")
    # w is the consistently oriented, normalised u x v
    p = curvature_proxy(frame.as_matrix(), rel, np.asarray(rn))
    return PairGeometry(rel, frame.w.copy(), p)


def _features_from_clusters(pts: np.ndarray, interest: np.ndarray, centroids: np.ndarray,
                            clusters: np.ndarray, anchor: str) -> PairFeatureSet:
    # centroids: (N, k2); clusters: (N, k2, k3)
    centers = pts[centroids]                          # (N, k2, 3)
    nbrs = pts[clusters]                              # (N, k2, k3, 3)
    order = angular_order(centers, nbrs)
    nbrs = np.take_along_axis(nbrs, order[..., None], axis=-2)
    u, v, w, status = approx_frames_sorted(centers, nbrs)
    if anchor == "centroid":
        origin = centers[..., None, :]
    else:
        origin = pts[interest][:, None, None, :]
    rel = nbrs - origin
    rn = np.linalg.norm(rel, axis=-1)
    bad = (status != OK) | (rn < 1e-12)
    safe_rn = np.where(bad, 1.0, rn)
    axes = np.stack([u, v, w], axis=-2)               # (N, k2, k3, 3, 3)
    p = curvature_proxy(axes, rel, safe_rn)
    feats = np.concatenate([rel, w, p], axis=-1)
    feats[bad] = 0.0
    N, k2, k3 = clusters.shape
    return PairFeatureSet(feats.reshape(N, k2 * k3, FEATURE_DIM), bad.reshape(N, k2 * k3))


def point_pair_features(cloud: PointCloud, sample: HierarchicalSample,
                        anchor: str = "centroid") -> PairFeatureSet:
    """The K = k2*k3 pair features credited to one interest point.

    Rows run cluster by cluster, neighbors in cyclic angular order.
    Degenerate pairs or frames become zero rows and are flagged.
    """
    if anchor not in ANCHORS:
        raise GeometryError(f"anchor must be one of {ANCHORS}, got {anchor!r}")
    fs = _features_from_clusters(
        cloud.points,
        np.array([sample.interest_index]),
        np.asarray(sample.centroid_indices)[None],
        np.asarray(sample.cluster_neighbors)[None],
        anchor,
    )
    return PairFeatureSet(fs.features[0], fs.degenerate[0])


def cloud_pair_features(cloud: PointCloud, cfg: SamplingConfig = SamplingConfig(),
                        anchor: str = "centroid",
                        index: Optional[NeighborIndex] = None) -> PairFeatureSet:
    """Raw OPFR pipeline: hierarchical sampling + frames + pair features for every point.

    Returns features shaped (N, k2*k3, 9).
    """
    if anchor not in ANCHORS:
        raise GeometryError(f"anchor must be one of {ANCHORS}, got {anchor!r}")
    batch = sample_arrays(cloud, cfg, index)
    interest = np.arange(len(cloud))
    return _features_from_clusters(cloud.points, interest, batch.centroids, batch.clusters, anchor)
