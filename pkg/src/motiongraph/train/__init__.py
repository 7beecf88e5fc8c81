"""Training: losses, scenario support domains, augmentations, cascade."""

from .augment import augment_camera_perturb, augment_global_rotation, random_rotation, rotate_structure
from .cascade import (
    METRIC_FIELDS,
    VARIANTS,
    TrainConfig,
    TrainItem,
    TrainResult,
    cascade_train,
    init_model,
    write_metrics_csv,
)
from .losses import (
    loss_affinity,
    loss_autoencoder,
    loss_pointnet,
    loss_reconstruction,
    loss_smoothness,
)
from .support import SCENARIOS, build_pseudo_gt_affinity, build_support_domain, scenario_view

__all__ = [
    "METRIC_FIELDS",
    "SCENARIOS",
    "VARIANTS",
    "TrainConfig",
    "TrainItem",
    "TrainResult",
    "augment_camera_perturb",
    "augment_global_rotation",
    "build_pseudo_gt_affinity",
    "build_support_domain",
    "cascade_train",
    "init_model",
    "loss_affinity",
    "loss_autoencoder",
    "loss_pointnet",
    "loss_reconstruction",
    "loss_smoothness",
    "random_rotation",
    "rotate_structure",
    "scenario_view",
    "write_metrics_csv",
]
