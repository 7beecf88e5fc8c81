"""Synthetic capture simulator, perturbation injectors, metrics, grids."""

from .grid import CSV_FIELDS, GridSpec, run_grid
from .metrics import evaluate, order_agreement, sequencing_accuracy, structure_errors
from .motion import Motion, load_mocap_csv, make_motion, motion_from_spec
from .perturb import decimate_joints, inject_noise, resample
from .simulate import RigConfig, SamplingConfig, SimulationResult, build_cameras, simulate_scene

__all__ = [
    "CSV_FIELDS",
    "GridSpec",
    "Motion",
    "RigConfig",
    "SamplingConfig",
    "SimulationResult",
    "build_cameras",
    "decimate_joints",
    "evaluate",
    "inject_noise",
    "load_mocap_csv",
    "make_motion",
    "motion_from_spec",
    "order_agreement",
    "resample",
    "run_grid",
    "sequencing_accuracy",
    "simulate_scene",
    "structure_errors",
]
