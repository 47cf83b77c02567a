"""Mirror symmetry detection by reflecting data and registering it back onto itself."""

from .errors import (
    DegeneratePatchError, DetectionFailure, DimensionError, MsrError, NonReflectionError,
    NormalizationError, ParseError, UnderdeterminedPlaneError,
)
from .evaluation import GroundTruthSegment, MetricConfig, line_correct, precision_recall, segment_correct
from .geometry import (
    Hyperplane, RigidTransform, eigenvector_minus_one, fit_plane_to_midpoints, midpoints,
    plane_angle_distance, reflect_points, reflection_matrix, symmetry_plane_from_registration,
)
from .icp import IcpConfig, RegistrationResult, best_rigid_transform, icp_register, nearest_neighbors
from .nxc import NxcConfig, TransformVote, consensus_peaks, nxc_correlate, nxc_register, patch_votes, preprocess
from .pairing import Assignment, Skeleton, dtw_cost, munkres, pair_skeletons, symmetry_cost_matrix
from .pipeline import (
    MsrConfig, SymmetryDetection, SymmetrySegment, detect_symmetry_2d, detect_symmetry_points,
    line_to_segment,
)

__version__ = "0.1.0"
