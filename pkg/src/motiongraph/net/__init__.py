"""Learnable pipeline: continuous convolutions, U-Net, decode heads.

Everything is plain numpy with hand-written reverse-mode passes; there
is no autodiff framework underneath. Parameters are nested dicts (see
``params``), so optimizers and checkpoints stay format-agnostic.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .conv import (
    continuous_conv,
    continuous_conv_backward,
    joint_knn,
    pad_support,
    shape_conv,
    shape_conv_backward,
)
from .decode import (
    affinity_decode,
    affinity_decode_backward,
    sparsify,
    sparsify_backward,
)
from .layers import layer_norm, layer_norm_backward
from .mlp import init_mlp, mlp_backward, mlp_forward
from .params import tree_leaves, tree_map, tree_zeros_like
from .pointnet import (
    init_pointnet_decoder,
    init_pointnet_encoder,
    pointnet_decode,
    pointnet_decode_backward,
    pointnet_encode,
    pointnet_encode_backward,
)
from .unet import UNetConfig, config_from_meta, config_meta, init_unet, unet_backward, unet_forward

__all__ = [
    "UNetConfig",
    "affinity_decode",
    "affinity_decode_backward",
    "config_from_meta",
    "config_meta",
    "continuous_conv",
    "continuous_conv_backward",
    "init_mlp",
    "init_pointnet_decoder",
    "init_pointnet_encoder",
    "init_unet",
    "joint_knn",
    "layer_norm",
    "layer_norm_backward",
    "load_checkpoint",
    "mlp_backward",
    "mlp_forward",
    "pad_support",
    "pointnet_decode",
    "pointnet_decode_backward",
    "pointnet_encode",
    "pointnet_encode_backward",
    "save_checkpoint",
    "shape_conv",
    "shape_conv_backward",
    "sparsify",
    "sparsify_backward",
    "tree_leaves",
    "tree_map",
    "tree_zeros_like",
    "unet_backward",
    "unet_forward",
]
