"""U-Net over frame feature rows, built from continuous convolutions.

Each level combines a trajectory filter (convolution across frames,
kernel driven by frame-descriptor differences) with a shape filter
(convolution among each frame's joints, averaged over joints, kernel
driven by joint-geometry differences), then layer-normalizes:

    h_l = LN_l( trajConv(h_{l-1}) + meanJoints(shapeConv(joints)) )

Frame descriptors are the raw network input rows throughout, so every
level's kernel sees the same geometry; the final decoder level omits
the normalization so the output can live at trajectory scale. Hidden
maps are recorded after every level for the loss coupling between
encoder and decoder.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import SchemaError
from .conv import (
    continuous_conv,
    continuous_conv_backward,
    joint_knn,
    shape_conv,
    shape_conv_backward,
)
from .layers import layer_norm, layer_norm_backward
from .mlp import init_mlp


@dataclass(frozen=True)
class UNetConfig:
    """Architecture hyperparameters.

    input_width: channels of the input rows (3P for trajectory input).
    widths: encoder output channels, shallow to bottleneck; the decoder
    mirrors them back up to input_width.
    """

    input_width: int
    widths: tuple = (64, 32, 16, 8)
    kernel_hidden: tuple = (16, 16)
    joint_k: int = 4

    def level_channels(self):
        """(c_in, c_out, has_norm) for the encoder then decoder levels."""
        enc_in = (self.input_width,) + tuple(self.widths[:-1])
        plan = [(i, o, True) for i, o in zip(enc_in, self.widths)]
        dec_out = tuple(reversed(self.widths[:-1])) + (self.input_width,)
        dec_in = (self.widths[-1],) + dec_out[:-1]
        for idx, (i, o) in enumerate(zip(dec_in, dec_out)):
            plan.append((i, o, idx < len(dec_out) - 1))
        return plan


def config_meta(config: UNetConfig, use_pointnet: bool = False) -> dict:
    """JSON-safe description of the architecture for checkpoint meta."""
    return {
        "inputWidth": config.input_width,
        "widths": list(config.widths),
        "kernelHidden": list(config.kernel_hidden),
        "jointK": config.joint_k,
        "usePointnet": bool(use_pointnet),
    }


def config_from_meta(meta: dict):
    """Inverse of :func:`config_meta`; returns (config, use_pointnet)."""
    try:
        config = UNetConfig(
            input_width=int(meta["inputWidth"]),
            widths=tuple(int(w) for w in meta["widths"]),
            kernel_hidden=tuple(int(w) for w in meta["kernelHidden"]),
            joint_k=int(meta["jointK"]),
        )
        return config, bool(meta.get("usePointnet", False))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError([f"model meta: {exc!r}"]) from None


@dataclass
class UNetOutput:
    latent: np.ndarray
    encoder_maps: list
    decoder_maps: list
    x_hat: np.ndarray
    cache: dict = field(repr=False, default=None)


def _level_name(index, depth):
    return f"enc{index}" if index < depth else f"dec{index - depth}"


def init_unet(rng, config, kernel_scale=0.05):
    """Parameter tree for the configured architecture.

    Trajectory kernels start near an identity block (the convolution
    then averages neighbor features); shape kernels start near zero so
    the untrained network is a plain support-domain smoother.
    """
    params = {
        "input_norm": {
            "gamma": np.ones(config.input_width),
            "beta": np.zeros(config.input_width),
        }
    }
    depth = len(config.widths)
    for index, (c_in, c_out, has_norm) in enumerate(config.level_channels()):
        level = {
            "traj": init_mlp(
                rng,
                [config.input_width, *config.kernel_hidden, c_out * c_in],
                final_scale=kernel_scale,
                final_bias=np.eye(c_out, c_in).ravel(),
            ),
            "shape": init_mlp(
                rng,
                [3, *config.kernel_hidden, c_out * 3],
                final_scale=kernel_scale,
            ),
        }
        if has_norm:
            level["norm"] = {"gamma": np.ones(c_out), "beta": np.zeros(c_out)}
        params[_level_name(index, depth)] = level
    return params


def unet_forward(params, config, x, joints, support, joint_neighbors=None, descriptors=None):
    """Run the full encoder-decoder stack.

    x: (N, input_width) feature rows; joints: (N, P, 3) raw joint
    coordinates (centered internally per frame); support: dense (N, K)
    frame-neighbor indices; joint_neighbors: optional (N, P, Kj),
    computed from the centered joints when omitted; descriptors:
    optional kernel inputs per frame, defaulting to the raw feature
    rows (they are constants to the backward pass either way).
    """
    if descriptors is None:
        descriptors = x
    centered = joints - joints.mean(axis=1, keepdims=True)
    if joint_neighbors is None:
        joint_neighbors = joint_knn(centered, config.joint_k)
    h, in_cache = layer_norm(
        x, params["input_norm"]["gamma"], params["input_norm"]["beta"]
    )
    depth = len(config.widths)
    levels = []
    encoder_maps, decoder_maps = [], []
    for index, (c_in, c_out, has_norm) in enumerate(config.level_channels()):
        level = params[_level_name(index, depth)]
        t_out, t_cache = continuous_conv(h, descriptors, support, level["traj"], c_out)
        s_out, s_cache = shape_conv(centered, joint_neighbors, level["shape"], c_out)
        z = t_out + s_out
        if has_norm:
            h, n_cache = layer_norm(z, level["norm"]["gamma"], level["norm"]["beta"])
        else:
            h, n_cache = z, None
        levels.append((t_cache, s_cache, n_cache))
        (encoder_maps if index < depth else decoder_maps).append(h)
    cache = {"input_norm": in_cache, "levels": levels}
    return UNetOutput(
        latent=encoder_maps[-1],
        encoder_maps=encoder_maps,
        decoder_maps=decoder_maps,
        x_hat=decoder_maps[-1],
        cache=cache,
    )


def _accumulate(base, extra):
    if extra is None:
        return base
    return base + extra


def unet_backward(
    params,
    config,
    cache,
    d_xhat=None,
    d_latent=None,
    d_encoder_maps=None,
    d_decoder_maps=None,
):
    """Reverse pass with gradients injected at any recorded map.

    d_xhat adds to the final decoder map; d_latent to the bottleneck;
    d_encoder_maps / d_decoder_maps are lists aligned with the forward
    outputs (None entries allowed). Returns (grads tree, d_x).
    """
    depth = len(config.widths)
    plan = config.level_channels()
    levels = cache["levels"]
    d_enc = d_encoder_maps or [None] * depth
    d_dec = d_decoder_maps or [None] * depth

    grads = {}
    n_rows = levels[0][0][0].shape[0]
    d_h = np.zeros((n_rows, config.input_width))
    d_h = _accumulate(_accumulate(d_h, d_xhat), d_dec[-1])
    for index in reversed(range(2 * depth)):
        name = _level_name(index, depth)
        level = params[name]
        t_cache, s_cache, n_cache = levels[index]
        level_grads = {}
        if n_cache is not None:
            d_z, d_gamma, d_beta = layer_norm_backward(n_cache, d_h)
            level_grads["norm"] = {"gamma": d_gamma, "beta": d_beta}
        else:
            d_z = d_h
        d_prev, traj_grads = continuous_conv_backward(level["traj"], t_cache, d_z)
        level_grads["traj"] = traj_grads
        level_grads["shape"] = shape_conv_backward(level["shape"], s_cache, d_z)
        grads[name] = level_grads
        d_h = d_prev
        if index == depth:
            d_h = _accumulate(_accumulate(d_h, d_latent), d_enc[-1])
        elif 0 < index < depth:
            d_h = _accumulate(d_h, d_enc[index - 1])
        elif index > depth:
            d_h = _accumulate(d_h, d_dec[index - depth - 1])
    d_x, d_gamma, d_beta = layer_norm_backward(cache["input_norm"], d_h)
    grads["input_norm"] = {"gamma": d_gamma, "beta": d_beta}
    return grads, d_x
