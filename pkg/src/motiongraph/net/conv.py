"""Continuous convolutions over irregular supports.

A kernel network maps a descriptor difference to a full out-by-in
weight block; each node averages its neighbors' features transformed by
the block predicted for that edge:

    h_i = (1/K) * sum_k g(d_i - d_{n_ik}) @ f_{n_ik}

Descriptors are treated as constants in the backward pass (they are
rows of the network input, never of a hidden map), so gradients flow to
the kernel parameters and the neighbor features only.
"""

import numpy as np

from ..errors import EmptySupportError
from .mlp import mlp_backward, mlp_forward


def pad_support(neighbors, k, descriptors=None):
    """Densify ragged neighbor lists into an (N, K) index array.

    Rows shorter than K repeat their nearest entry (by descriptor
    distance when ``descriptors`` is given, the first listed entry
    otherwise). An empty row is an error unless the graph has a single
    node, which pads with itself.
    """
    n = len(neighbors)
    out = np.empty((n, k), dtype=np.int64)
    empty = [i for i, row in enumerate(neighbors) if len(row) == 0]
    if empty and n > 1:
        raise EmptySupportError(empty)
    for i, row in enumerate(neighbors):
        row = np.asarray(row, dtype=np.int64)
        if row.size == 0:
            row = np.array([i], dtype=np.int64)
        if row.size >= k:
            out[i] = row[:k]
            continue
        if descriptors is not None:
            gaps = np.linalg.norm(descriptors[row] - descriptors[i], axis=1)
            fill = row[np.argmin(gaps)]
        else:
            fill = row[0]
        out[i, : row.size] = row
        out[i, row.size :] = fill
    return out


def continuous_conv(features, descriptors, neighbors, kernel, c_out):
    """Forward pass; returns (out (N, c_out), cache).

    features: (M, c_in) rows addressed by ``neighbors``; descriptors:
    (M, D) aligned with features; neighbors: dense (N, K) int indices.
    """
    n, k = neighbors.shape
    c_in = features.shape[1]
    deltas = descriptors[:n, None, :] - descriptors[neighbors]
    blocks_flat, acts = mlp_forward(kernel, deltas.reshape(n * k, -1))
    blocks = blocks_flat.reshape(n, k, c_out, c_in)
    neigh_feats = features[neighbors]
    out = np.einsum("nkoc,nkc->no", blocks, neigh_feats) / k
    return out, (features, neighbors, blocks, acts, c_in, c_out)


def continuous_conv_backward(kernel, cache, d_out):
    """Reverse pass; returns (d_features, kernel_grads)."""
    features, neighbors, blocks, acts, c_in, c_out = cache
    n, k = neighbors.shape
    neigh_feats = features[neighbors]
    d_blocks = np.einsum("no,nkc->nkoc", d_out / k, neigh_feats)
    d_neigh = np.einsum("nkoc,no->nkc", blocks, d_out) / k
    d_features = np.zeros_like(features)
    np.add.at(d_features, neighbors, d_neigh)
    _, kernel_grads = mlp_backward(kernel, acts, d_blocks.reshape(n * k, -1))
    return d_features, kernel_grads


def joint_knn(joints, k):
    """Per-frame K nearest joints (N, P, K) on centered coordinates.

    Rows come back nearest-first; distance ties break toward the lower
    joint index. With a single joint each row is the joint itself.
    """
    n, p, _ = joints.shape
    if p == 1:
        return np.zeros((n, 1, max(k, 1)), dtype=np.int64)
    k = min(k, p - 1)
    centered = joints - joints.mean(axis=1, keepdims=True)
    diff = centered[:, :, None, :] - centered[:, None, :, :]
    dist = np.einsum("npqc,npqc->npq", diff, diff)
    idx = np.arange(p)
    dist[:, idx, idx] = np.inf
    order = np.argsort(dist, axis=2, kind="stable")
    return order[:, :, :k]


def shape_conv(joints, joint_neighbors, kernel, c_out):
    """Continuous convolution among each frame's joints, then a mean
    over joints; returns (out (N, c_out), cache).

    joints: (N, P, 3) barycenter-centered coordinates, serving as both
    features and descriptors; joint_neighbors: (N, P, Kj).
    """
    n, p, _ = joints.shape
    flat = joints.reshape(n * p, 3)
    offsets = (np.arange(n) * p)[:, None, None]
    neighbors = (joint_neighbors + offsets).reshape(n * p, -1)
    per_joint, cache = continuous_conv(flat, flat, neighbors, kernel, c_out)
    out = per_joint.reshape(n, p, c_out).mean(axis=1)
    return out, (cache, n, p)


def shape_conv_backward(kernel, cache, d_out):
    """Reverse pass; returns kernel_grads only (joint coordinates are
    network inputs, held constant)."""
    conv_cache, n, p = cache
    d_per_joint = np.repeat(d_out[:, None, :] / p, p, axis=1)
    _, kernel_grads = continuous_conv_backward(
        kernel, conv_cache, d_per_joint.reshape(n * p, -1)
    )
    return kernel_grads
