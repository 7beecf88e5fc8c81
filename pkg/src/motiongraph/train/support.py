"""Support-domain construction for the three capture scenarios, plus the
pseudo-ground-truth affinities used by stage-1 supervision.

A support domain lists, per frame, the candidate neighbors the network
and the joint solver are allowed to connect. Which frames qualify
depends on what timing information the capture provides:

* ``sync``: a global order exists, so neighbors are the temporally
  nearest frames.
* ``independent``: no timing at all; neighbors are nearest in the
  initialized-trajectory descriptor space, gated by reconstructability.
* ``unsync``: per-camera order but unknown offsets; neighbors come from
  other streams as contiguous runs around the best-matching frame.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptySupportError, SchemaError
from ..geometry import PartnerPolicy, Scene, TrajectoryMatrix, scene_scale
from ..graphopt import ObjectiveWeights, SupportDomain, reconstructability_penalty, solve_affinity

SCENARIOS = ("independent", "unsync", "sync")


def scenario_view(scene: Scene, scenario: str) -> Scene:
    """The scene as the capture scenario permits seeing it.

    ``independent`` grants no timing information at all, ``unsync``
    keeps per-stream order only, and ``sync`` keeps everything. The
    returned scene shares the observation arrays with the input.
    """
    if scenario not in SCENARIOS:
        raise SchemaError([f"scenario must be one of {SCENARIOS}, got {scenario!r}"])
    streams = scene.streams if scenario in ("unsync", "sync") else None
    order = scene.global_order if scenario == "sync" else None
    return Scene(scene.n_frames, scene.n_joints, scene.cameras, scene.uv, scene.valid, streams, order)


def _order_positions(scene: Scene) -> np.ndarray:
    """Position of every frame in the global order (identity fallback)."""
    if scene.global_order is None:
        return np.arange(scene.n_frames, dtype=np.int64)
    pos = np.empty(scene.n_frames, dtype=np.int64)
    pos[scene.global_order] = np.arange(scene.n_frames)
    return pos


def _descriptor_rows(x_init) -> np.ndarray:
    if isinstance(x_init, TrajectoryMatrix):
        rows = x_init.data
    else:
        rows = np.asarray(x_init, dtype=np.float64)
    if rows.ndim != 2:
        raise SchemaError([f"descriptor rows must be 2-D, got shape {rows.shape}"])
    return rows


def _sync_neighbors(scene: Scene, k: int) -> list[np.ndarray]:
    pos = _order_positions(scene)
    n = scene.n_frames
    rows = []
    for i in range(n):
        gap = np.abs(pos - pos[i])
        gap[i] = np.iinfo(np.int64).max
        order = np.argsort(gap, kind="stable")
        rows.append(order[: min(k, n - 1)])
    return rows


def _independent_neighbors(scene: Scene, x_init, k: int, policy: PartnerPolicy) -> list[np.ndarray]:
    rows = _descriptor_rows(x_init)
    gram = rows @ rows.T
    d = np.diag(gram)
    dist = np.maximum(d[:, None] + d[None, :] - 2.0 * gram, 0.0)

    penalty = reconstructability_penalty(scene, policy=policy)
    usable = penalty <= policy.max_score_fraction * scene_scale(scene)
    np.fill_diagonal(usable, False)

    out = []
    empty = []
    for i in range(scene.n_frames):
        cand = np.where(usable[i])[0]
        if cand.size == 0:
            empty.append(i)
            continue
        order = cand[np.argsort(dist[i, cand], kind="stable")]
        out.append(order[:k])
    if empty:
        raise EmptySupportError(empty)
    return out


def _unsync_neighbors(scene: Scene, x_init, k: int) -> list[np.ndarray]:
    if not scene.streams:
        raise SchemaError(["the unsynchronized scenario needs per-camera stream metadata"])
    rows = _descriptor_rows(x_init)
    stream_of = np.full(scene.n_frames, -1, dtype=np.int64)
    for s in scene.streams:
        stream_of[s.frame_order] = s.id

    out = []
    empty = []
    for i in range(scene.n_frames):
        # Frontier entries are (distance, stream id, position-in-stream,
        # side); ties resolve toward lower stream then earlier frame so
        # the grown runs are reproducible.
        frontier = []
        for s in scene.streams:
            if s.id == stream_of[i] or not s.frame_order:
                continue
            d = np.linalg.norm(rows[s.frame_order] - rows[i], axis=1)
            seed = int(np.argmin(d))
            frontier.append((float(d[seed]), s.id, seed, "seed", d, s.frame_order))
        chosen: list[int] = []
        grown: dict[int, list[int]] = {}
        while frontier and len(chosen) < k:
            frontier.sort(key=lambda e: (e[0], e[1], e[2]))
            dist, sid, pos, _, d, order = frontier.pop(0)
            chosen.append(order[pos])
            run = grown.setdefault(sid, [pos, pos])
            run[0] = min(run[0], pos)
            run[1] = max(run[1], pos)
            lo, hi = grown[sid]
            for nxt in (lo - 1, hi + 1):
                if 0 <= nxt < len(order) and not any(
                    e[1] == sid and e[2] == nxt for e in frontier
                ):
                    if nxt < lo or nxt > hi:
                        frontier.append((float(d[nxt]), sid, nxt, "grow", d, order))
        if not chosen:
            empty.append(i)
            continue
        out.append(np.asarray(chosen, dtype=np.int64))
    if empty:
        raise EmptySupportError(empty)
    return out


def build_support_domain(
    scene: Scene,
    scenario: str,
    x_init=None,
    k: int = 6,
    policy: PartnerPolicy | None = None,
) -> SupportDomain:
    """Candidate neighbor lists for one of the three capture scenarios.

    ``x_init`` (the initialized trajectory rows) is required for the
    ``independent`` and ``unsync`` scenarios, whose notion of proximity
    lives in descriptor space. Neighbor lists come back closest-first,
    which downstream padding relies on.
    """
    if scenario not in SCENARIOS:
        raise SchemaError([f"unknown scenario {scenario!r}, expected one of {SCENARIOS}"])
    if k < 1:
        raise SchemaError([f"support size k must be positive, got {k}"])
    if scenario == "sync":
        rows = _sync_neighbors(scene, k)
    else:
        if x_init is None:
            raise ValueError(f"scenario {scenario!r} requires the initialized trajectory")
        if scenario == "independent":
            rows = _independent_neighbors(scene, x_init, k, policy or PartnerPolicy())
        else:
            rows = _unsync_neighbors(scene, x_init, k)
    return SupportDomain(rows, k)


def build_pseudo_gt_affinity(
    order: np.ndarray,
    mode: str = "binary",
    x_gt=None,
    k: int = 6,
    weights: ObjectiveWeights | None = None,
) -> np.ndarray:
    """Supervision affinity from a known frame order.

    ``binary`` marks temporally adjacent pairs with symmetric ones and
    needs nothing else. ``continuous`` runs the affinity solver on the
    ground-truth structure over a chain window of half-width ``k``
    around each frame, producing soft rows that sum to one.
    """
    order = np.asarray(order, dtype=np.int64)
    n = order.size
    a = np.zeros((n, n))
    if mode == "binary":
        for i in range(n - 1):
            a[order[i], order[i + 1]] = 1.0
            a[order[i + 1], order[i]] = 1.0
        return a
    if mode != "continuous":
        raise SchemaError([f"unknown pseudo-affinity mode {mode!r}"])
    if x_gt is None:
        raise ValueError("continuous pseudo-affinity requires the ground-truth structure")
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    rows = []
    for i in range(n):
        gap = np.abs(pos - pos[i])
        gap[i] = np.iinfo(np.int64).max
        nearest = np.argsort(gap, kind="stable")
        rows.append(nearest[: min(k, n - 1)])
    if n == 1:
        return a
    support = SupportDomain(rows, k)
    return solve_affinity(_descriptor_rows(x_gt), support, weights or ObjectiveWeights())
