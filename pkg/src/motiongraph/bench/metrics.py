"""Reconstruction and sequencing metrics.

Errors are plain per-joint Euclidean distances in world meters with no
alignment step; the world frame is pinned by the known cameras, so an
alignment would hide calibration-frame mistakes rather than fix them.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import kendalltau

from ..errors import SchemaError


def _points(x, name: str) -> np.ndarray:
    if hasattr(x, "points"):
        return x.points()
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return arr.reshape(arr.shape[0], arr.shape[1] // 3, 3)
    if arr.ndim != 3:
        raise SchemaError([f"{name}: expected (N, P, 3) points, got shape {arr.shape}"])
    return arr


def structure_errors(x_est, x_gt, mask=None) -> dict:
    """Per-joint distance statistics between two structures.

    ``mask`` selects which (frame, joint) entries count; it defaults to
    everything. Frames where the mask is empty report NaN per-frame
    error and are excluded from the aggregates.
    """
    est = _points(x_est, "estimate")
    gt = _points(x_gt, "ground truth")
    if est.shape != gt.shape:
        raise SchemaError([f"structure shapes differ: {est.shape} vs {gt.shape}"])
    if mask is None:
        mask = np.ones(est.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    dist = np.linalg.norm(est - gt, axis=2)
    flat = dist[mask]
    per_frame = np.full(est.shape[0], np.nan)
    rows = mask.any(axis=1)
    for i in np.where(rows)[0]:
        per_frame[i] = dist[i, mask[i]].mean()
    return {
        "meanErr": float(flat.mean()) if flat.size else float("nan"),
        "medErr": float(np.median(flat)) if flat.size else float("nan"),
        "perFrame": per_frame,
    }


def sequencing_accuracy(a: np.ndarray, gt_order) -> float:
    """Fraction of ground-truth-adjacent frame pairs linked in the affinity."""
    a = np.asarray(a, dtype=np.float64)
    order = np.asarray(gt_order, dtype=np.int64)
    if order.size < 2:
        return 1.0
    sym = a + a.T
    hits = sum(1 for i in range(order.size - 1) if sym[order[i], order[i + 1]] > 0.0)
    return hits / (order.size - 1)


def order_agreement(est_order, gt_order) -> float:
    """Kendall tau between two orders, up to reversal.

    Reversing an order negates tau exactly, so agreement up to reversal
    is the absolute correlation of the rank vectors.
    """
    est = np.asarray(est_order, dtype=np.int64)
    gt = np.asarray(gt_order, dtype=np.int64)
    if est.shape != gt.shape or sorted(est.tolist()) != sorted(gt.tolist()):
        raise SchemaError(["orders must be permutations of the same frame set"])
    if est.size < 2:
        return 1.0
    frames = np.sort(est)
    pos = np.empty(frames.max() + 1, dtype=np.int64)
    pos_gt = pos.copy()
    pos[est] = np.arange(est.size)
    pos_gt[gt] = np.arange(gt.size)
    tau = kendalltau(pos[frames], pos_gt[frames]).statistic
    # tau lives in [-1, 1] mathematically; keep float error inside it.
    return float(min(abs(tau), 1.0))


def evaluate(x_est, x_gt, mask=None, affinity=None, gt_order=None, est_order=None) -> dict:
    """Bundle of reconstruction and sequencing metrics.

    Sequencing entries appear only when their inputs are provided:
    ``seqAcc`` needs the affinity and the ground-truth order, ``tau``
    needs an extracted order as well.
    """
    out = structure_errors(x_est, x_gt, mask)
    if affinity is not None and gt_order is not None:
        out["seqAcc"] = sequencing_accuracy(affinity, gt_order)
    if est_order is not None and gt_order is not None:
        out["tau"] = order_agreement(est_order, gt_order)
    return out
