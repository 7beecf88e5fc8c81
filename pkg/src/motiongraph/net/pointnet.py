"""PointNet canonicalization: a frame's joints to virtual 3D points.

Each valid joint runs through a shared MLP; a channelwise max over the
joints pools the results into 3*n_virtual values, reinterpreted as
virtual 3D points around the shape barycenter. The barycenter is
subtracted before the MLP and added back after, so translating a shape
translates its virtual points.

Pooling with max and summing barycenters in sorted coordinate order
make the encoding bitwise invariant to joint permutations.
"""

import numpy as np

from ..errors import DegenerateGeometryError
from .mlp import init_mlp, mlp_backward, mlp_forward


def _stable_mean(rows):
    """Columnwise mean with sorted-order summation, so the result does
    not depend on row order even at the bit level."""
    return np.sort(rows, axis=0).sum(axis=0) / rows.shape[0]


def init_pointnet_encoder(rng, hidden=(32, 32), n_virtual=10):
    return init_mlp(rng, [3, *hidden, 3 * n_virtual])


def init_pointnet_decoder(rng, n_joints, hidden=(64,), n_virtual=10):
    return init_mlp(rng, [3 * n_virtual, *hidden, 3 * n_joints])


def pointnet_encode(params, shape, valid=None):
    """shape: (P, 3); valid: optional (P,) bool. Returns (virtual
    points (V, 3), cache)."""
    shape = np.asarray(shape, dtype=float)
    if valid is None:
        valid = np.ones(shape.shape[0], dtype=bool)
    rows = shape[valid]
    if rows.shape[0] == 0:
        raise DegenerateGeometryError("shape has no valid joints")
    barycenter = _stable_mean(rows)
    feats, acts = mlp_forward(params, rows - barycenter)
    pooled = feats.max(axis=0)
    winners = feats.argmax(axis=0)
    virtual = pooled.reshape(-1, 3) + barycenter
    return virtual, (acts, winners, feats.shape)


def pointnet_encode_backward(params, cache, d_virtual):
    """Gradients wrt the encoder parameters (the joint coordinates are
    pipeline inputs, held constant)."""
    acts, winners, feats_shape = cache
    d_feats = np.zeros(feats_shape)
    d_feats[winners, np.arange(feats_shape[1])] = d_virtual.ravel()
    _, grads = mlp_backward(params, acts, d_feats)
    return grads


def pointnet_decode(params, virtual):
    """Reconstruct a (P, 3) shape from the virtual points; returns
    (shape, cache). Centered around the virtual points' barycenter."""
    virtual = np.asarray(virtual, dtype=float)
    barycenter = _stable_mean(virtual)
    flat = (virtual - barycenter).reshape(1, -1)
    out, acts = mlp_forward(params, flat)
    shape = out.reshape(-1, 3) + barycenter
    return shape, (acts, virtual.shape)


def pointnet_decode_backward(params, cache, d_shape):
    """Returns (d_virtual, grads)."""
    acts, virtual_shape = cache
    d_flat, grads = mlp_backward(params, acts, d_shape.reshape(1, -1))
    d_centered = d_flat.reshape(virtual_shape)
    v = virtual_shape[0]
    d_virtual = (
        d_centered
        - d_centered.mean(axis=0, keepdims=True)
        + d_shape.sum(axis=0, keepdims=True) / v
    )
    return d_virtual, grads
