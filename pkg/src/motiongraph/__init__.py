"""Trajectory triangulation from unsynchronized multi-view 2D observations.

The package estimates time-varying sparse 3D geometry (e.g. skeleton
joints) from 2D observations taken by known cameras whose frames carry no
usable global sequencing. A frame-affinity graph, either optimized
directly or predicted by a learned encoder, couples frames so that a
quadratic structure solve can recover all trajectories jointly.
"""

from .errors import (
    BehindCameraError,
    ClusterCountError,
    DegenerateGeometryError,
    EmptySupportError,
    MotionGraphError,
    RankDeficiencyError,
    SchemaError,
    TrainingDivergedError,
)
from .geometry import (
    Camera,
    Observation,
    PartnerPolicy,
    Ray,
    Scene,
    Stream,
    TrajectoryMatrix,
    backproject,
    point_to_ray_sq,
    project,
    pseudo_triangulate,
    relabel_frames,
    reprojection_residuals,
    scene_scale,
    triangulate_rays,
)
from .graphopt import (
    ObjectiveWeights,
    SupportDomain,
    alternating_reconstruction,
    evaluate_objective,
    solve_affinity,
    solve_structure,
    structure_solve_backward,
)
from .pipeline import PipelineConfig, load_model, run_dloe, run_inference, scenario_view

__version__ = "0.1.0"

__all__ = [
    "BehindCameraError",
    "Camera",
    "ClusterCountError",
    "DegenerateGeometryError",
    "EmptySupportError",
    "MotionGraphError",
    "Observation",
    "ObjectiveWeights",
    "PartnerPolicy",
    "PipelineConfig",
    "RankDeficiencyError",
    "Ray",
    "Scene",
    "SchemaError",
    "Stream",
    "SupportDomain",
    "TrainingDivergedError",
    "TrajectoryMatrix",
    "alternating_reconstruction",
    "backproject",
    "evaluate_objective",
    "load_model",
    "point_to_ray_sq",
    "project",
    "pseudo_triangulate",
    "relabel_frames",
    "reprojection_residuals",
    "run_dloe",
    "run_inference",
    "scenario_view",
    "scene_scale",
    "solve_affinity",
    "solve_structure",
    "structure_solve_backward",
    "triangulate_rays",
    "__version__",
]
