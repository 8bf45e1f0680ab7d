"""Point cloud local geometry features.

The raw pipeline is hierarchical sampling -> approximated local frames ->
9-d pair features; a shared MLP with pooling turns those into per-point
vectors. A vanilla Point Feature Histogram implementation is included as the
baseline.
"""

from .cfgen import PairFeatureSet, PairGeometry, cloud_pair_features, pair_geometry, point_pair_features
from .errors import (DegenerateFrame, DegeneratePair, GeometryError, InsufficientNeighbors,
                     NormalUndefined, OpfrError, ParseError)
from .frames import LocalFrame, OrderedNeighborhood, approx_frame, exact_frame, order_neighbors
from .geom import NeighborIndex, PointCloud, build_index, fps, knn
from .model import MlpParams, MlpSpec, init_params, opfr_backward, opfr_forward, param_count
from .pfh import PfhConfig, PfhDescriptor, darboux_angles, estimate_normals, pfh_all, pfh_descriptor
from .sampling import HierarchicalSample, SamplingConfig, hierarchical_sample, sample_all

__version__ = "0.1.0"
