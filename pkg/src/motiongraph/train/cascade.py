"""Cascaded two-stage training over the five scenario variants.

Every training item is expanded into up to five views of the same
sequence (independent, unsynchronized, synchronized support, a rotated
world, and a perturbed-then-rerendered rig), all pushed through one
shared-weight network and averaged. Stage 1 trains the frame
autoencoder and the affinity head; stage 2 keeps those losses at a
small weight and adds a loss through the solver layer, either
self-supervised smoothness or full 3D error.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import TrainingDivergedError
from ..geometry import PartnerPolicy, Scene, TrajectoryMatrix, pseudo_triangulate
from ..graphopt import ObjectiveWeights, solve_structure, structure_solve_backward
from ..net import (
    UNetConfig,
    affinity_decode,
    affinity_decode_backward,
    config_meta,
    init_pointnet_decoder,
    init_pointnet_encoder,
    init_unet,
    pad_support,
    pointnet_decode,
    pointnet_decode_backward,
    pointnet_encode,
    pointnet_encode_backward,
    save_checkpoint,
    sparsify,
    sparsify_backward,
    tree_leaves,
    tree_map,
    tree_zeros_like,
    unet_backward,
    unet_forward,
)
from ..rng import substream
from .augment import augment_camera_perturb, augment_global_rotation, rotate_structure
from .losses import loss_affinity, loss_autoencoder, loss_pointnet, loss_reconstruction, loss_smoothness
from .support import build_pseudo_gt_affinity, build_support_domain, scenario_view

VARIANTS = ("independent", "unsync", "sync", "rotated", "perturbed")

METRIC_FIELDS = (
    "epoch",
    "loss",
    "lossAutoencoder",
    "lossAffinity",
    "lossPointnet",
    "lossSmoothness",
    "lossReconstruction",
    "wallTimeS",
)


@dataclass
class TrainItem:
    """One training sequence: a clean simulated scene plus supervision.

    ``x_gt`` may be None for capture-only data; such items train with
    binary pseudo-affinities and skip the variants and losses that need
    3D truth.
    """

    scene: Scene
    gt_order: np.ndarray
    x_gt: np.ndarray | None = None

    def __post_init__(self):
        self.gt_order = np.asarray(self.gt_order, dtype=np.int64)
        if self.x_gt is not None:
            self.x_gt = np.asarray(self.x_gt, dtype=np.float64).reshape(
                self.scene.n_frames, self.scene.n_joints, 3
            )


@dataclass
class TrainConfig:
    seed: int
    stage: int = 1
    supervision: str = "sequencingOnly"
    epochs: int = 100
    learning_rate: float = 1e-3
    momentum: float = 0.9
    k: int = 6
    q: int = 2
    stage1_weight: float = 0.1
    noise_px: tuple = (1.0, 5.0)
    theta_max_deg: float = 5.0
    translation_fraction: float = 0.02
    widths: tuple = (64, 32, 16, 8)
    kernel_hidden: tuple = (16, 16)
    joint_k: int = 4
    n_virtual: int = 10
    use_pointnet: bool = False
    affinity_mode: str = "auto"
    variants: tuple = VARIANTS
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    policy: PartnerPolicy = field(default_factory=PartnerPolicy)
    cold_start: bool = False

    def __post_init__(self):
        problems = []
        if self.stage not in (1, 2):
            problems.append(f"stage must be 1 or 2, got {self.stage}")
        if self.supervision not in ("sequencingOnly", "full3D"):
            problems.append(f"unknown supervision {self.supervision!r}")
        if self.learning_rate <= 0 or not 0.0 <= self.momentum < 1.0:
            problems.append("need learning_rate > 0 and momentum in [0, 1)")
        if self.epochs < 1 or not self.k >= self.q >= 1:
            problems.append("need epochs >= 1 and k >= q >= 1")
        if not 0.0 <= self.noise_px[0] <= self.noise_px[1]:
            problems.append(f"bad noise range {self.noise_px}")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            problems.append(f"unknown variants {unknown}")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass
class TrainResult:
    params: dict
    net_config: UNetConfig
    metrics: list


def init_model(rng, config: TrainConfig, n_joints: int):
    """Fresh parameter tree and architecture for the configured model."""
    input_width = 3 * (config.n_virtual if config.use_pointnet else n_joints)
    net_config = UNetConfig(
        input_width=input_width,
        widths=config.widths,
        kernel_hidden=config.kernel_hidden,
        joint_k=config.joint_k,
    )
    params = {"unet": init_unet(rng, net_config)}
    if config.use_pointnet:
        params["pointnet_enc"] = init_pointnet_encoder(rng, n_virtual=config.n_virtual)
        params["pointnet_dec"] = init_pointnet_decoder(rng, n_joints, n_virtual=config.n_virtual)
    return params, net_config


@dataclass
class _Variant:
    view: Scene
    x_init: TrajectoryMatrix
    support: object
    x_gt_rows: np.ndarray | None


def _noisy(scene: Scene, sigma: float, rng) -> Scene:
    if sigma <= 0.0:
        return scene
    uv = scene.uv.copy()
    uv[scene.valid] += rng.normal(0.0, sigma, size=uv[scene.valid].shape)
    return Scene(
        scene.n_frames, scene.n_joints, scene.cameras, uv, scene.valid, scene.streams, scene.global_order
    )


def _prepare_variant(item: TrainItem, variant: str, config: TrainConfig, rng):
    scene, x_gt = item.scene, item.x_gt
    scenario = variant
    if variant == "rotated":
        scenario = "independent"
        scene, rot = augment_global_rotation(scene, rng)
        x_gt = None if x_gt is None else rotate_structure(x_gt, rot)
    elif variant == "perturbed":
        scenario = "independent"
        if x_gt is None:
            return None
        scene = augment_camera_perturb(
            scene, x_gt, rng, config.theta_max_deg, config.translation_fraction
        )
    if variant in ("unsync",) and not scene.streams:
        return None
    sigma = rng.uniform(*config.noise_px) if config.noise_px[1] > 0 else 0.0
    view = scenario_view(_noisy(scene, sigma, rng), scenario)
    x_init = pseudo_triangulate(view, config.policy)
    support = build_support_domain(view, scenario, x_init, config.k, config.policy)
    rows = None if x_gt is None else x_gt.reshape(scene.n_frames, -1)
    return _Variant(view, x_init, support, rows)


def _encode_frames(params, x_init: TrajectoryMatrix):
    """Per-frame shape canonicalization; returns (rows, caches)."""
    pts = x_init.points()
    outs = [pointnet_encode(params["pointnet_enc"], pts[i], x_init.mask[i]) for i in range(x_init.n_frames)]
    rows = np.stack([v.ravel() for v, _ in outs])
    return rows, [c for _, c in outs]


def _variant_pass(params, net_config, config: TrainConfig, data: _Variant, a_g: np.ndarray, n_joints: int):
    """Forward and backward over one variant; returns (losses, grads)."""
    losses = {}
    grads = {}
    enc_caches = None
    if config.use_pointnet:
        rows, enc_caches = _encode_frames(params, data.x_init)
        joints = rows.reshape(rows.shape[0], -1, 3)
    else:
        rows, joints = data.x_init.data, data.x_init.points()
    dense = pad_support(data.support.neighbors, config.k, descriptors=rows)
    out = unet_forward(params["unet"], net_config, rows, joints, dense)
    a_d, a_cache = affinity_decode(out.latent)

    l_ae, d_xhat, d_enc, d_dec = loss_autoencoder(
        rows, out.x_hat, out.encoder_maps, out.decoder_maps, n_joints
    )
    l_a, d_ad = loss_affinity(a_d, a_g)
    losses["lossAutoencoder"] = l_ae
    losses["lossAffinity"] = l_a
    total = l_ae + l_a

    d_rows_extra = np.zeros_like(rows)
    if config.use_pointnet:
        dec_grads = None
        l_p_total = 0.0
        d_rows_pointnet = np.zeros_like(rows)
        target = data.x_init.data
        for i in range(rows.shape[0]):
            shape, dec_cache = pointnet_decode(params["pointnet_dec"], rows[i].reshape(-1, 3))
            l_p, d_shape = loss_pointnet(shape.reshape(1, -1), target[i : i + 1], n_joints)
            d_virtual, g = pointnet_decode_backward(
                params["pointnet_dec"], dec_cache, d_shape.reshape(-1, 3)
            )
            d_rows_pointnet[i] = d_virtual.ravel()
            dec_grads = g if dec_grads is None else tree_map(np.add, dec_grads, g)
            l_p_total += l_p
        l_p_total /= rows.shape[0]
        losses["lossPointnet"] = l_p_total
        total += l_p_total
        grads["pointnet_dec"] = tree_map(lambda g: g / rows.shape[0], dec_grads)
        d_rows_extra += d_rows_pointnet / rows.shape[0]
        # The autoencoder target is the encoded rows themselves, so the
        # residual pushes back on the encoder too.
        d_rows_extra -= d_xhat

    weight = config.stage1_weight if config.stage == 2 else 1.0
    if weight != 1.0:
        d_xhat = weight * d_xhat
        d_ad = weight * d_ad
        d_enc = [weight * g for g in d_enc]
        d_dec = [weight * g for g in d_dec]
        d_rows_extra = weight * d_rows_extra

    if config.stage == 2:
        a_s, keep = sparsify(a_d, data.support, config.q)
        x_e = solve_structure(a_s, data.view, config.weights)
        if config.supervision == "full3D" and data.x_gt_rows is not None:
            l_main, d_xe = loss_reconstruction(x_e.data, data.x_gt_rows, n_joints)
            d_a_direct = 0.0
            losses["lossReconstruction"] = l_main
        else:
            l_main, d_xe, d_a_direct = loss_smoothness(x_e.data, a_s)
            losses["lossSmoothness"] = l_main
        d_a_solver = structure_solve_backward(a_s, data.view, config.weights, x_e, d_xe)
        d_ad = d_ad + sparsify_backward(keep, d_a_solver + d_a_direct)
        total = weight * total + l_main

    d_latent = affinity_decode_backward(a_cache, d_ad)
    unet_grads, d_rows = unet_backward(
        params["unet"],
        net_config,
        out.cache,
        d_xhat=d_xhat,
        d_latent=d_latent,
        d_encoder_maps=d_enc,
        d_decoder_maps=d_dec,
    )
    grads["unet"] = unet_grads
    if config.use_pointnet:
        d_virtual_rows = d_rows + d_rows_extra
        enc_grads = None
        for i in range(rows.shape[0]):
            g = pointnet_encode_backward(
                params["pointnet_enc"], enc_caches[i], d_virtual_rows[i].reshape(-1, 3)
            )
            enc_grads = g if enc_grads is None else tree_map(np.add, enc_grads, g)
        grads["pointnet_enc"] = enc_grads
    losses["loss"] = total
    return losses, grads


def _finite(value: float, grads) -> bool:
    if not np.isfinite(value):
        return False
    return all(np.all(np.isfinite(leaf)) for _, leaf in tree_leaves(grads))


def cascade_train(
    items: list[TrainItem],
    config: TrainConfig,
    params=None,
    net_config: UNetConfig | None = None,
    checkpoint_dir=None,
) -> TrainResult:
    """Run one training stage over a set of sequences.

    Stage 2 expects the stage-1 parameters (pass ``cold_start=True`` in
    the config to train from scratch anyway). Updates are momentum SGD,
    one step per item per epoch, with the item order reshuffled each
    epoch from the run seed. A non-finite loss or gradient aborts with
    ``TrainingDivergedError`` after writing the last good parameters to
    ``checkpoint_dir`` when one is given.
    """
    if not items:
        raise ValueError("no training items")
    n_joints = items[0].scene.n_joints
    if any(item.scene.n_joints != n_joints for item in items):
        raise ValueError("all training items must share a joint count")
    if params is None:
        if config.stage == 2 and not config.cold_start:
            raise ValueError("stage 2 continues from stage-1 parameters; pass them or set cold_start")
        params, net_config = init_model(substream(config.seed, "init"), config, n_joints)
    elif net_config is None:
        raise ValueError("parameters were given without their architecture")

    modes = []
    affinities = []
    for item in items:
        mode = config.affinity_mode
        if mode == "auto":
            mode = "continuous" if item.x_gt is not None else "binary"
        modes.append(mode)
        gt_rows = None if item.x_gt is None else item.x_gt.reshape(item.scene.n_frames, -1)
        affinities.append(
            build_pseudo_gt_affinity(item.gt_order, mode, gt_rows, config.k, config.weights)
        )

    velocity = tree_zeros_like(params)
    metrics: list[dict] = []
    last_good = tree_map(np.copy, params)
    checkpoint_dir = None if checkpoint_dir is None else Path(checkpoint_dir)
    meta = {"model": config_meta(net_config, config.use_pointnet), "stage": config.stage}

    for epoch in range(config.epochs):
        tick = time.perf_counter()
        order = substream(config.seed, "order", epoch).permutation(len(items))
        sums: dict[str, float] = {}
        counts: dict[str, int] = {}
        steps = 0
        for item_idx in order:
            item = items[item_idx]
            batch = []
            for variant in config.variants:
                rng = substream(config.seed, "aug", epoch, int(item_idx), variant)
                data = _prepare_variant(item, variant, config, rng)
                if data is not None:
                    batch.append(data)
            if not batch:
                continue
            grads_sum = tree_zeros_like(params)
            step_losses: dict[str, float] = {}
            for data in batch:
                losses, grads = _variant_pass(
                    params, net_config, config, data, affinities[item_idx], n_joints
                )
                for key, value in losses.items():
                    step_losses[key] = step_losses.get(key, 0.0) + value / len(batch)
                for path, leaf in tree_leaves(grads):
                    _tree_add_at(grads_sum, path, leaf / len(batch))
            if not _finite(step_losses["loss"], grads_sum):
                if checkpoint_dir is not None:
                    save_checkpoint(checkpoint_dir / "diverged-last-good", last_good, meta)
                raise TrainingDivergedError(
                    f"non-finite loss or gradient at epoch {epoch}, item {int(item_idx)}"
                )
            velocity = tree_map(lambda v, g: config.momentum * v - config.learning_rate * g, velocity, grads_sum)
            params = tree_map(np.add, params, velocity)
            last_good = tree_map(np.copy, params)
            for key, value in step_losses.items():
                sums[key] = sums.get(key, 0.0) + value
                counts[key] = counts.get(key, 0) + 1
            steps += 1
        row = {"epoch": epoch, "wallTimeS": time.perf_counter() - tick}
        for key in sums:
            row[key] = sums[key] / counts[key]
        metrics.append(row)
        if checkpoint_dir is not None:
            save_checkpoint(checkpoint_dir / "latest", params, {**meta, "epoch": epoch})
    if checkpoint_dir is not None:
        write_metrics_csv(checkpoint_dir / "metrics.csv", metrics)
    return TrainResult(params, net_config, metrics)


def _tree_add_at(tree, path: str, value) -> None:
    node = tree
    parts = path.split("/")
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = node[parts[-1]] + value


def write_metrics_csv(path, metrics: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_FIELDS)
        for row in metrics:
            writer.writerow([repr(row[k]) if isinstance(row.get(k), float) else row.get(k, "") for k in METRIC_FIELDS])
