"""Evidential road mapping from LIDAR scans."""
from .evidential import (
    MassFunction, Commonality, WeightOfEvidence, TotalConflictError, InconsistentCommonalityError,
    simple_mass, combine_dempster, to_commonality, from_commonality, combine_commonality_batch,
    plausibility_transform, entropy,
)
from .geometry import Pose2D, RigidMotion2D, VectorMap, Polygon
from .grid import GridConfig, EvidentialGrid, RoadMapper

__version__ = "0.1.0"

__all__ = [
    "MassFunction", "Commonality", "WeightOfEvidence", "TotalConflictError", "InconsistentCommonalityError",
    "simple_mass", "combine_dempster", "to_commonality", "from_commonality", "combine_commonality_batch",
    "plausibility_transform", "entropy", "Pose2D", "RigidMotion2D", "VectorMap", "Polygon",
    "GridConfig", "EvidentialGrid", "RoadMapper",
]
