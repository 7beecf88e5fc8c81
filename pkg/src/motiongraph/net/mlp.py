"""Fully connected stacks with hand-written reverse mode.

One MLP definition backs the continuous-convolution kernel networks and
both PointNet stages: linear layers with ReLU between them and a linear
output. Parameters are a flat dict ``{"w0", "b0", "w1", "b1", ...}``.
"""

import numpy as np


def init_mlp(rng, dims, final_scale=1.0, final_bias=None):
    """He-initialized parameters for ``dims = [in, hidden..., out]``.

    Hidden layers draw from N(0, 2/fan_in). The output layer draws from
    N(0, final_scale^2/fan_in); shrinking ``final_scale`` starts the
    network near the constant function given by ``final_bias`` (used to
    seed convolution kernels at an averaging operator).
    """
    if len(dims) < 2:
        raise ValueError("an MLP needs at least input and output dims")
    params = {}
    last = len(dims) - 2
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        scale = np.sqrt((final_scale**2 if i == last else 2.0) / fan_in)
        params[f"w{i}"] = scale * rng.standard_normal((fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
    if final_bias is not None:
        bias = np.asarray(final_bias, dtype=float)
        if bias.shape != (dims[-1],):
            raise ValueError("final_bias shape does not match the output dim")
        params[f"b{last}"] = bias.copy()
    return params


def mlp_forward(params, x):
    """Evaluate on a batch ``x`` of shape (B, in); returns (y, cache).

    The cache is the list of layer inputs (post-activation), which is
    exactly what the backward pass needs.
    """
    n_layers = len(params) // 2
    acts = [x]
    h = x
    for i in range(n_layers):
        h = h @ params[f"w{i}"] + params[f"b{i}"]
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def mlp_backward(params, acts, d_out):
    """Gradients from upstream ``d_out`` (B, out); returns (d_x, grads)."""
    n_layers = len(params) // 2
    grads = {}
    dh = d_out
    for i in reversed(range(n_layers)):
        if i < n_layers - 1:
            # acts holds post-ReLU values; the mask (value > 0) matches
            # the forward subgradient choice at exactly zero.
            dh = np.where(acts[i + 1] > 0.0, dh, 0.0)
        grads[f"w{i}"] = acts[i].T @ dh
        grads[f"b{i}"] = dh.sum(axis=0)
        dh = dh @ params[f"w{i}"].T
    return dh, grads
