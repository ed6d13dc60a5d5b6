"""Multi-scale diffusion geometry for time-varying particle trajectories.

The library turns dense particle trajectories into a spectral diffusion
embedding (via a landmark low-rank factorization), and derives from it
scale-parameterized separation fields, similarity neighborhoods, and
clusterings, together with analytic flow generators and a traditional FTLE
oracle for validation.
"""

from .diffusion import (
    DEFAULT_RADIUS_SCALE,
    DEFAULT_THRESHOLD,
    BandwidthTable,
    DiffusionEmbedding,
    SparseKernel,
    SpatialIndex,
    build_diffusion_operator,
    build_landmark_kernel,
    compute_bandwidths,
    diffusion_distance,
    distance_field,
    embedding,
    embedding_vectors,
    implied_row_sums,
    load_embedding,
    normalized_diffusion_distance,
    write_embedding,
)
from .errors import (
    ConfigurationError,
    ConnectivityError,
    CorruptionError,
    DegenerateNeighborhoodError,
    DriftscopeError,
    FormatError,
    ValidationError,
)
from .fields import ScalarField, load_field, write_field
from .flows import (
    FlowSpec,
    evaluate_flow_map,
    evaluate_velocity,
    integrate_flow,
    seed_positions,
)
from .landmarks import (
    LandmarkSet,
    eval_landmarks,
    select_landmarks,
    subspace_error,
    write_eval_csv,
)
from .separation import (
    FtleGrid,
    diffusion_separation,
    grid_ftle,
    knn_log_density,
    opacity_map,
    particle_separation,
    spatial_knn,
)
from .service import SessionState, create_server, serve
from .similarity import (
    MultiSourceField,
    NeighborhoodResult,
    cluster_embedding,
    multi_source_field,
    similarity_neighborhood,
)
from .trajectory import (
    TrajectoryDataset,
    dynamic_distance,
    load_trajectories,
    time_reversed,
    write_trajectories,
)

__version__ = "0.1.0"
