"""Scalar training losses and their analytic partials.

Every loss here is a normalized squared-error form, so the gradients are
linear in the residuals and cheap to return alongside the value. N is
the frame count and P the joint count; losses over frame rows are
normalized by N*P so that values are comparable across sequence sizes.
"""

from __future__ import annotations

import numpy as np

from ..graphopt import build_laplacian


def _diff(a, b, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"{name}: shape mismatch {a.shape} vs {b.shape}")
    return a - b


def loss_autoencoder(x_in, x_hat, encoder_maps, decoder_maps, n_joints: int):
    """Reconstruction loss of the frame autoencoder plus hidden-map ties.

    Compares the network input rows against the decoded output, and each
    encoder map against the decoder map of equal width (with mirrored
    channel plans that is decoder map d-1-i for encoder map i, counting
    maps from 1; the bottleneck pairs with the first decoder level).
    Normalized by N * n_joints.

    Returns ``(value, d_x_hat, d_encoder_maps, d_decoder_maps)`` where
    the map gradients line up index-for-index with the inputs.
    """
    if len(encoder_maps) != len(decoder_maps):
        raise ValueError(
            f"expected equal map counts, got {len(encoder_maps)} encoder "
            f"and {len(decoder_maps)} decoder maps"
        )
    n = np.asarray(x_in).shape[0]
    norm = 1.0 / (n * n_joints)
    out_diff = _diff(x_hat, x_in, "autoencoder output")
    value = float(np.sum(out_diff**2))
    d_x_hat = 2.0 * norm * out_diff

    depth = len(encoder_maps)
    d_enc = [np.zeros_like(np.asarray(m, dtype=np.float64)) for m in encoder_maps]
    d_dec = [np.zeros_like(np.asarray(m, dtype=np.float64)) for m in decoder_maps]
    for i in range(depth - 1):
        j = depth - 2 - i
        pair_diff = _diff(encoder_maps[i], decoder_maps[j], f"hidden map pair ({i}, {j})")
        value += float(np.sum(pair_diff**2))
        d_enc[i] += 2.0 * norm * pair_diff
        d_dec[j] -= 2.0 * norm * pair_diff
    return value * norm, d_x_hat, d_enc, d_dec


def loss_affinity(a_decoded, a_target):
    """Mean squared affinity error, normalized by the frame count N.

    Returns ``(value, d_a_decoded)``.
    """
    diff = _diff(a_decoded, a_target, "affinity")
    n = diff.shape[0]
    return float(np.sum(diff**2)) / n, 2.0 / n * diff


def loss_reconstruction(x_est, x_target, n_joints: int):
    """Mean squared structure error against ground truth, over N * P.

    Returns ``(value, d_x_est)``.
    """
    diff = _diff(x_est, x_target, "structure")
    norm = 1.0 / (diff.shape[0] * n_joints)
    return float(np.sum(diff**2)) * norm, 2.0 * norm * diff


def loss_pointnet(x_decoded, x_in, n_joints: int):
    """Shape-autoencoder reconstruction error, same form as ``loss_reconstruction``."""
    return loss_reconstruction(x_decoded, x_in, n_joints)


def loss_smoothness(x, a):
    """Self-supervised smoothness of a structure under an affinity.

    The value is the smoothness plus compactness objective at unit
    weights: ``||L(A) X||_F^2 + 0.5 * sum_ij A_ij ||x_i - x_j||^2``.

    Returns ``(value, d_x, d_a)``. The affinity gradient has a zero
    diagonal since diagonal entries never enter either term.
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    lap = build_laplacian(a)
    lx = lap @ x

    gram = x @ x.T
    sq = np.maximum(np.diag(gram)[:, None] + np.diag(gram)[None, :] - 2.0 * gram, 0.0)
    value = float(np.sum(lx**2)) + 0.5 * float(np.sum(a * sq))

    lap_sym = build_laplacian(0.5 * (a + a.T))
    d_x = 2.0 * lap.T @ lx + 2.0 * lap_sym @ x

    # dS/dA_ij = 2 (LX)_i . (x_i - x_j); the i-dependent dot with x_i is
    # the diagonal of (LX) X^T.
    m = lx @ x.T
    d_a = 2.0 * (np.diag(m)[:, None] - m) + 0.5 * sq
    np.fill_diagonal(d_a, 0.0)
    return value, d_x, d_a
