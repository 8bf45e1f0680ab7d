"""Synthetic primitives with analytic ground truth, and the toy classification set."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import GeometryError
from .geom import PointCloud, fps

KINDS = ("plane", "sphere", "cylinder", "corner")


@dataclass(frozen=True)
class ShapeSpec:
    """Sampling recipe for one primitive.

    ``extent`` is the half side of plane/corner patches and the half height
    of cylinders. ``random_pose`` applies a seed-derived rotation about the
    origin so classes cannot be told apart by their orientation.
    """

    kind: str
    count: int = 1024
    radius: float = 1.0
    extent: float = 1.0
    dihedral_deg: float = 90.0
    sigma: float = 0.0
    seed: int = 0
    random_pose: bool = False
    # oversample by this factor and thin with FPS; 1 keeps plain uniform sampling
    even_factor: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeometryError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.count < 16:
            raise GeometryError(f"count must be >= 16, got {self.count}")
        if self.radius <= 0 or self.extent <= 0:
            raise GeometryError("radius and extent must be positive")
        if self.even_factor < 1:
            raise GeometryError("even_factor must be >= 1")
        if self.sigma < 0:
            raise GeometryError("sigma must be non-negative")
        if not 0 < self.dihedral_deg < 180:
            raise GeometryError("dihedral angle must lie strictly between 0 and 180 degrees")


@dataclass(frozen=True)
class SyntheticShape:
    cloud: PointCloud
    normals: np.ndarray          # analytic unit normals (before noise)
    mean_curvature: np.ndarray   # analytic, per point
    labels: np.ndarray           # patch membership (corner); zeros otherwise


def _unit_sphere(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate(spec: ShapeSpec) -> SyntheticShape:
    """Sample ``spec``; analytic normals, mean curvature and patch labels ride along."""
    rng = np.random.default_rng(spec.seed)
    n, e, R = spec.count * spec.even_factor, spec.extent, spec.radius
    labels = np.zeros(n, dtype=np.int64)
    if spec.kind == "plane":
        xy = rng.uniform(-e, e, size=(n, 2))
        pts = np.column_stack([xy, np.zeros(n)])
        nrm = np.tile([0.0, 0.0, 1.0], (n, 1))
        curv = np.zeros(n)
    elif spec.kind == "sphere":
        nrm = _unit_sphere(rng, n)
        pts = R * nrm
        curv = np.full(n, 1.0 / R)
    elif spec.kind == "cylinder":
        phi = rng.uniform(0, 2 * np.pi, size=n)
        z = rng.uniform(-e, e, size=n)
        nrm = np.column_stack([np.cos(phi), np.sin(phi), np.zeros(n)])
        pts = np.column_stack([R * nrm[:, 0], R * nrm[:, 1], z])
        curv = np.full(n, 1.0 / (2.0 * R))
    else:
        # half-planes {s*(1,0,0) + y*(0,1,0)} and {s*(cos a,0,sin a) + y*(0,1,0)}, s in [0, e]
        a = np.deg2rad(spec.dihedral_deg)
        labels = (np.arange(n) >= n // 2).astype(np.int64)
        s = rng.uniform(0, e, size=n)
        y = rng.uniform(-e, e, size=n)
        dirs = np.where(labels[:, None] == 0, [1.0, 0.0, 0.0], [np.cos(a), 0.0, np.sin(a)])
        pts = s[:, None] * dirs + y[:, None] * np.array([0.0, 1.0, 0.0])
        nrm = np.where(labels[:, None] == 0, [0.0, 0.0, 1.0], [-np.sin(a), 0.0, np.cos(a)])
        curv = np.zeros(n)
    if spec.even_factor > 1:
        keep = np.sort(fps(pts, spec.count, 0))
        pts, nrm, curv, labels = pts[keep], nrm[keep], curv[keep], labels[keep]
    if spec.random_pose:
        rot = Rotation.random(random_state=rng).as_matrix()
        pts = pts @ rot.T
        nrm = nrm @ rot.T
    if spec.sigma > 0:
        pts = pts + rng.normal(scale=spec.sigma, size=pts.shape)
    return SyntheticShape(PointCloud(pts), nrm, curv, labels)


def equal_area_templates(count: int = 256, area: float = 4.0, even_factor: int = 4) -> List[ShapeSpec]:
    """Plane / sphere / cylinder / corner with matched surface area.

    Equal area and point count give every class the same sampling density,
    so neighbor distances alone do not reveal the class.
    """
    half = np.sqrt(area) / 2.0                     # plane: (2*half)^2 = area
    r_sph = np.sqrt(area / (4 * np.pi))
    r_cyl = r_sph
    h_cyl = area / (2 * np.pi * r_cyl)
    corner_half = np.sqrt(area / 4.0)              # two patches of e x 2e
    common = dict(count=count, random_pose=True, even_factor=even_factor)
    return [
        ShapeSpec("plane", extent=half, **common),
        ShapeSpec("sphere", radius=r_sph, **common),
        ShapeSpec("cylinder", radius=r_cyl, extent=h_cyl / 2, **common),
        ShapeSpec("corner", extent=corner_half, dihedral_deg=90.0, **common),
    ]


@dataclass(frozen=True)
class ToyDataset:
    train: List[Tuple[PointCloud, int]]
    test: List[Tuple[PointCloud, int]]
    class_names: Tuple[str, ...]


def make_toy_dataset(classes: Optional[Sequence[ShapeSpec]] = None, n_per_class: int = 200,
                     split: float = 0.8, seed: int = 7) -> ToyDataset:
    """Labelled clouds with a deterministic stratified train/test split.

    Every sample gets its own derived seed, a random rotation about z and a
    random translation.
    """
    classes = list(classes) if classes is not None else equal_area_templates()
    if len(classes) < 2:
        raise GeometryError("a classification dataset needs at least two classes")
    if n_per_class < 2:
        raise GeometryError(f"n_per_class must be >= 2, got {n_per_class}")
    if not 0 < split < 1:
        raise GeometryError(f"split must lie in (0, 1), got {split}")
    n_train = int(round(split * n_per_class))
    n_train = min(max(n_train, 1), n_per_class - 1)
    root = np.random.SeedSequence(seed)
    class_seqs = root.spawn(len(classes))
    train, test = [], []
    for label, (tmpl, cseq) in enumerate(zip(classes, class_seqs)):
        for j, sseq in enumerate(cseq.spawn(n_per_class)):
            rng = np.random.default_rng(sseq)
            shape_seed = int(rng.integers(2**63 - 1))
            cloud = generate(replace(tmpl, seed=shape_seed)).cloud
            theta = rng.uniform(0, 2 * np.pi)
            rz = Rotation.from_euler("z", theta).as_matrix()
            shift = rng.uniform(-1.0, 1.0, size=3)
            cloud = cloud.transformed(rz, shift)
            (train if j < n_train else test).append((cloud, label))
    return ToyDataset(train, test, tuple(t.kind for t in classes))
