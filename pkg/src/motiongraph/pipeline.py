"""End-to-end orchestration shared by the CLI, the benchmark grid, and
the applications: scenario handling, the classical solver path, and
checkpointed network inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .geometry import PartnerPolicy, Scene, TrajectoryMatrix, pseudo_triangulate
from .graphopt import ObjectiveWeights, SupportDomain, alternating_reconstruction, solve_structure
from .net import (
    affinity_decode,
    config_from_meta,
    load_checkpoint,
    pad_support,
    pointnet_encode,
    sparsify,
    unet_forward,
)
from .train.support import SCENARIOS, build_support_domain, scenario_view


@dataclass
class PipelineConfig:
    """Knobs shared by the dloe and inference paths.

    ``k`` is the support-domain size and ``q`` the number of affinity
    entries kept per row; a row can never keep more neighbors than it
    is offered, hence k >= q >= 1.
    """

    scenario: str = "independent"
    k: int = 6
    q: int = 2
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    policy: PartnerPolicy = field(default_factory=PartnerPolicy)
    seed: int = 0
    max_iters: int = 50
    tol: float = 1e-6

    def __post_init__(self):
        problems = []
        if self.scenario not in SCENARIOS:
            problems.append(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not self.k >= self.q >= 1:
            problems.append(f"need k >= q >= 1, got k={self.k}, q={self.q}")
        if problems:
            raise SchemaError(problems)


@dataclass
class DloeResult:
    x: TrajectoryMatrix
    affinity: np.ndarray
    trace: list
    x_init: TrajectoryMatrix
    support: SupportDomain


def run_dloe(scene: Scene, config: PipelineConfig) -> DloeResult:
    """Classical path: initialize, build scenario support, alternate."""
    view = scenario_view(scene, config.scenario)
    x_init = pseudo_triangulate(view, config.policy)
    support = build_support_domain(view, config.scenario, x_init, config.k, config.policy)
    x, a, trace = alternating_reconstruction(
        view,
        support,
        config.weights,
        x_init=x_init,
        max_iters=config.max_iters,
        tol=config.tol,
        policy=config.policy,
    )
    return DloeResult(x, a, trace, x_init, support)


@dataclass
class InferenceResult:
    x: TrajectoryMatrix
    affinity_sparse: np.ndarray
    affinity_dense: np.ndarray
    latent: np.ndarray
    x_init: TrajectoryMatrix
    support: SupportDomain


def load_model(path):
    """Load a checkpoint directory into (params, unet config, use_pointnet)."""
    params, meta = load_checkpoint(path)
    if "model" not in meta:
        raise SchemaError(["checkpoint meta lacks the 'model' entry"])
    config, use_pointnet = config_from_meta(meta["model"])
    return params, config, use_pointnet


def network_features(params, use_pointnet: bool, x_init: TrajectoryMatrix):
    """Network input rows and per-frame joints for a given initialization.

    With the shape-canonicalization stream enabled the rows are the
    stacked virtual points of each frame's encoded shape; otherwise
    they are the trajectory rows themselves.
    """
    if not use_pointnet:
        return x_init.data, x_init.points()
    pts = x_init.points()
    rows = np.stack(
        [
            pointnet_encode(params["pointnet_enc"], pts[i], x_init.mask[i])[0].ravel()
            for i in range(x_init.n_frames)
        ]
    )
    return rows, rows.reshape(x_init.n_frames, -1, 3)


def run_inference(scene: Scene, params, net_config, config: PipelineConfig, use_pointnet: bool = False) -> InferenceResult:
    """Learned path: initialize, encode, decode affinity, sparsify, solve."""
    if not use_pointnet and 3 * scene.n_joints != net_config.input_width:
        raise SchemaError(
            [
                f"scene has {scene.n_joints} joints but the checkpoint expects "
                f"input width {net_config.input_width}; train with a matching "
                f"joint count or use the shape encoder"
            ]
        )
    view = scenario_view(scene, config.scenario)
    x_init = pseudo_triangulate(view, config.policy)
    support = build_support_domain(view, config.scenario, x_init, config.k, config.policy)
    rows, joints = network_features(params, use_pointnet, x_init)
    dense_support = pad_support(support.neighbors, config.k, descriptors=rows)
    out = unet_forward(params["unet"], net_config, rows, joints, dense_support)
    a_dense, _ = affinity_decode(out.latent)
    a_sparse, _ = sparsify(a_dense, support, config.q)
    x = solve_structure(a_sparse, view, config.weights)
    return InferenceResult(x, a_sparse, a_dense, out.latent, x_init, support)
