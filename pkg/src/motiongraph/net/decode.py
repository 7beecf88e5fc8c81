"""Affinity decode head and support-domain sparsification."""

import numpy as np


def affinity_decode(latent):
    """Dense affinity from latent rows: A_nm = 1/(1 + exp||F_n - F_m||).

    Off-diagonal values live in (0, 0.5] and the matrix is symmetric by
    construction; the diagonal (0.5 by the formula) is zeroed because a
    frame is not its own neighbor. Returns (a, cache).
    """
    diff = latent[:, None, :] - latent[None, :, :]
    dist = np.sqrt(np.einsum("nmc,nmc->nm", diff, diff))
    a = 1.0 / (1.0 + np.exp(dist))
    np.fill_diagonal(a, 0.0)
    return a, (latent, dist, a)


def affinity_decode_backward(cache, d_a):
    """Gradient wrt the latent rows.

    The distance is not differentiable at zero; coincident rows get a
    zero gradient there (the symmetric subgradient choice).
    """
    latent, dist, a = cache
    coef = -a * (1.0 - a) * d_a
    np.fill_diagonal(coef, 0.0)
    safe = np.where(dist > 0.0, dist, 1.0)
    w = np.where(dist > 0.0, coef / safe, 0.0)
    w_sym = w + w.T
    return w_sym.sum(axis=1, keepdims=True) * latent - w_sym @ latent


def sparsify(a, support, q):
    """Keep each row's q largest support-domain entries, zero the rest.

    Value ties break toward the lower frame index. Rows whose support
    holds fewer than q entries keep all of them. Returns (sparse, keep)
    where keep is the boolean mask of surviving entries.
    """
    if q < 1:
        raise ValueError("q must be at least 1")
    keep = np.zeros(a.shape, dtype=bool)
    for i, row in enumerate(support.neighbors):
        cand = np.sort(np.asarray(row, dtype=np.int64))
        if cand.size == 0:
            continue
        order = np.argsort(-a[i, cand], kind="stable")
        keep[i, cand[order[:q]]] = True
    return np.where(keep, a, 0.0), keep


def sparsify_backward(keep, d_sparse):
    """Kept entries pass gradients through; dropped entries block them."""
    return np.where(keep, d_sparse, 0.0)
