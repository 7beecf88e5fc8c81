"""Layer normalization with learnable scale and shift.

Statistics are taken across channels per node, with biased variance:

    y = (x - mean) / sqrt(var + eps) * gamma + beta
"""

import numpy as np


def layer_norm(x, gamma, beta, eps=1e-5):
    """x: (N, C); gamma, beta: (C,). Returns (y, cache)."""
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv
    return x_hat * gamma + beta, (x_hat, inv, gamma)


def layer_norm_backward(cache, d_out):
    """Returns (d_x, d_gamma, d_beta)."""
    x_hat, inv, gamma = cache
    d_gamma = (d_out * x_hat).sum(axis=0)
    d_beta = d_out.sum(axis=0)
    d_hat = d_out * gamma
    d_x = inv * (
        d_hat
        - d_hat.mean(axis=1, keepdims=True)
        - x_hat * (d_hat * x_hat).mean(axis=1, keepdims=True)
    )
    return d_x, d_gamma, d_beta
