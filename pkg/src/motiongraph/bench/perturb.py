"""Perturbation injectors: 2D noise, joint decimation, rate resampling.

Each returns a new scene; inputs are never modified. All randomness
comes from a caller-provided generator so experiment cells stay
self-seeded.
"""

from __future__ import annotations

import numpy as np

from ..errors import SchemaError
from ..geometry import Scene, Stream


def _clone(scene: Scene, uv=None, valid=None) -> Scene:
    return Scene(
        scene.n_frames,
        scene.n_joints,
        list(scene.cameras),
        scene.uv.copy() if uv is None else uv,
        scene.valid.copy() if valid is None else valid,
        streams=None if scene.streams is None else [Stream(s.id, list(s.frame_order)) for s in scene.streams],
        global_order=None if scene.global_order is None else scene.global_order.copy(),
    )


def inject_noise(scene: Scene, sigma: float, rng: np.random.Generator) -> Scene:
    """Add i.i.d. Gaussian pixel noise to every valid observation."""
    if sigma < 0:
        raise SchemaError([f"noise sigma must be nonnegative, got {sigma}"])
    if sigma == 0.0:
        return _clone(scene)
    uv = scene.uv.copy()
    uv[scene.valid] += rng.normal(0.0, sigma, size=uv[scene.valid].shape)
    return _clone(scene, uv=uv)


def decimate_joints(scene: Scene, fraction: float, rng: np.random.Generator) -> Scene:
    """Invalidate an exact count, round(fraction * valid), of observations.

    The exact-count policy (instead of per-entry coin flips) keeps the
    missing-data grids reproducible and the fractions honest at small N.
    """
    if not 0.0 <= fraction <= 1.0:
        raise SchemaError([f"missing fraction must be in [0, 1], got {fraction}"])
    flat = np.flatnonzero(scene.valid)
    count = int(round(fraction * flat.size))
    if count == 0:
        return _clone(scene)
    drop = rng.choice(flat, size=count, replace=False)
    valid = scene.valid.copy()
    uv = scene.uv.copy()
    valid.flat[drop] = False
    uv.reshape(-1, 2)[drop] = np.nan
    return _clone(scene, uv=uv, valid=valid)


def resample(scene: Scene, stride: int):
    """Keep every ``stride``-th frame of each stream (timestamp stride).

    Without stream metadata the stride walks the global order, or the
    frame index as a last resort. Returns ``(scene, kept)`` where
    ``kept`` maps new frame ids to the original ones.
    """
    if stride < 1:
        raise SchemaError([f"resample stride must be >= 1, got {stride}"])
    if scene.streams:
        kept_set = []
        for s in scene.streams:
            kept_set.extend(s.frame_order[::stride])
        kept = np.array(sorted(kept_set), dtype=np.int64)
    elif scene.global_order is not None:
        kept = np.sort(scene.global_order[::stride])
    else:
        kept = np.arange(0, scene.n_frames, stride, dtype=np.int64)

    new_id = np.full(scene.n_frames, -1, dtype=np.int64)
    new_id[kept] = np.arange(kept.size)
    streams = None
    if scene.streams is not None:
        streams = [
            Stream(s.id, [int(new_id[f]) for f in s.frame_order if new_id[f] >= 0])
            for s in scene.streams
        ]
    order = None
    if scene.global_order is not None:
        order = np.array([new_id[f] for f in scene.global_order if new_id[f] >= 0], dtype=np.int64)
    out = Scene(
        kept.size,
        scene.n_joints,
        [scene.cameras[f] for f in kept],
        scene.uv[kept].copy(),
        scene.valid[kept].copy(),
        streams=streams,
        global_order=order,
    )
    return out, kept
