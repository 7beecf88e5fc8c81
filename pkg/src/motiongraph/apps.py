"""Applications on top of the reconstruction core.

The solved affinity is a motion graph; these helpers read structure out
of it. Event segmentation is connectivity, sequencing is spectral
ordering along the graph's dominant path, and multi-target capture
reduces to the single-target pipeline on virtual frames plus a
clustering of the resulting graph.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ClusterCountError, SchemaError
from .geometry import Scene, TrajectoryMatrix
from .graphopt import solve_structure, validate_affinity
from .pipeline import DloeResult, PipelineConfig, run_dloe, run_inference
from .rng import derive_seed


def segment_events(a: np.ndarray, tau: float = 1e-6):
    """Connected components of the symmetrized affinity above ``tau``.

    Returns ``(n_components, labels)`` with labels in first-seen frame
    order, so the labeling is deterministic for a given matrix.
    """
    a = np.asarray(a, dtype=np.float64)
    validate_affinity(a)
    sym = 0.5 * (a + a.T)
    adj = csr_matrix(sym > tau)
    return connected_components(adj, directed=False)


def component_frames(labels: np.ndarray) -> list[np.ndarray]:
    labels = np.asarray(labels)
    return [np.where(labels == c)[0] for c in range(labels.max() + 1)]


def extract_sequencing(a: np.ndarray, frames=None, gap_tol: float = 1e-9) -> np.ndarray:
    """Order the frames of one component along its motion graph.

    Sorts by the Fiedler vector of the component's symmetrized
    Laplacian, which is monotone along a path graph. The sign of an
    eigenvector is arbitrary, so the order is canonicalized to start at
    the smaller frame id. A (near-)repeated second eigenvalue means the
    eigenvector basis is not unique; the order is then stabilized by
    frame index and a warning is raised.
    """
    a = np.asarray(a, dtype=np.float64)
    if frames is None:
        frames = np.arange(a.shape[0])
    frames = np.asarray(frames, dtype=np.int64)
    m = frames.size
    if m <= 1:
        return frames.copy()
    sym = 0.5 * (a + a.T)[np.ix_(frames, frames)]
    lap = np.diag(sym.sum(axis=1)) - sym
    eigvals, eigvecs = np.linalg.eigh(lap)
    if m > 2 and eigvals[2] - eigvals[1] < gap_tol:
        warnings.warn(
            "repeated second Laplacian eigenvalue; sequencing is ambiguous "
            "and falls back to frame-index tie-breaking",
            stacklevel=2,
        )
    order = frames[np.argsort(eigvecs[:, 1], kind="stable")]
    if order[0] > order[-1]:
        order = order[::-1].copy()
    return order


def segmentation_summary(a: np.ndarray, tau: float = 1e-6) -> list[dict]:
    """Per-component frame sets and extracted orders, JSON-shaped."""
    _, labels = segment_events(a, tau)
    out = []
    for frames in component_frames(labels):
        order = extract_sequencing(a, frames)
        out.append({"frames": frames.tolist(), "order": order.tolist()})
    return out


@dataclass
class TargetReconstruction:
    sources: list
    frames: np.ndarray
    order: np.ndarray
    x: TrajectoryMatrix
    affinity: np.ndarray


@dataclass
class MultiTargetResult:
    assignments: np.ndarray
    sources: list
    targets: list
    virtual: DloeResult | object


def _cluster_affinity(a: np.ndarray, m: int, seed: int, tau: float) -> np.ndarray:
    """Assign each frame of the affinity graph to one of m clusters."""
    n_comp, labels = segment_events(a, tau)
    if n_comp == m:
        return labels
    sym = 0.5 * (a + a.T)
    lap = np.diag(sym.sum(axis=1)) - sym
    eigvals, eigvecs = np.linalg.eigh(lap)
    if m > a.shape[0]:
        raise ClusterCountError(m, eigvals[: min(m + 2, a.shape[0])])
    # Connectivity disagrees with the requested count; fall back to
    # k-means on the first m nontrivial eigenvectors.
    feats = eigvecs[:, 1 : m + 1]
    rng = np.random.default_rng(derive_seed(seed, "multitarget", "kmeans"))
    _, labels = kmeans2(feats, m, minit="++", seed=rng)
    if np.unique(labels).size != m:
        raise ClusterCountError(m, eigvals[: m + 2])
    return labels


def multi_target_reconstruct(
    cameras: list,
    uv: np.ndarray,
    valid: np.ndarray,
    m: int,
    config: PipelineConfig,
    params=None,
    net_config=None,
    use_pointnet: bool = False,
    tau: float = 1e-6,
) -> MultiTargetResult:
    """Reconstruct M independent targets from grouped 2D observations.

    ``uv`` is (N, G, P, 2) with per-frame shape groupings already given;
    group identity across frames is unknown. Each observed (frame,
    group) pair becomes a virtual single-target frame, the standard
    pipeline runs on the virtual scene, and the solved motion graph is
    cut into M targets (by connectivity when it matches, spectral
    k-means otherwise). Each target is then re-solved on its own
    cluster-induced affinity.

    With ``m == 1`` every virtual frame is kept and the pipeline result
    is returned as-is, so the output matches the single-target path bit
    for bit.
    """
    uv = np.asarray(uv, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if uv.ndim != 4 or valid.shape != uv.shape[:3]:
        raise SchemaError([f"grouped observations need (N, G, P, 2) uv and matching valid, got {uv.shape}"])
    n, groups, p = valid.shape
    if m < 1:
        raise SchemaError([f"target count must be positive, got {m}"])

    sources = [
        (frame, g)
        for frame in range(n)
        for g in range(groups)
        if m == 1 or valid[frame, g].any()
    ]
    if len(sources) == 0:
        raise SchemaError(["no observed (frame, group) pairs"])
    v_uv = np.stack([uv[frame, g] for frame, g in sources])
    v_valid = np.stack([valid[frame, g] for frame, g in sources])
    v_scene = Scene(len(sources), p, [cameras[frame] for frame, _ in sources], v_uv, v_valid)

    if params is not None:
        result = run_inference(v_scene, params, net_config, config, use_pointnet)
        affinity = result.affinity_sparse
    else:
        result = run_dloe(v_scene, config)
        affinity = result.affinity

    if m == 1:
        assignments = np.zeros(len(sources), dtype=np.int64)
        frames = np.arange(len(sources))
        target = TargetReconstruction(
            sources, frames, extract_sequencing(affinity), result.x, affinity
        )
        return MultiTargetResult(assignments, sources, [target], result)

    assignments = _cluster_affinity(affinity, m, config.seed, tau)
    # Relabel clusters by their earliest virtual frame so target ids do
    # not depend on eigensolver sign conventions.
    first = {c: int(np.where(assignments == c)[0][0]) for c in np.unique(assignments)}
    ranks = {c: r for r, c in enumerate(sorted(first, key=first.get))}
    assignments = np.array([ranks[c] for c in assignments], dtype=np.int64)

    targets = []
    for c in range(m):
        frames = np.where(assignments == c)[0]
        sub_a = affinity[np.ix_(frames, frames)]
        sub_scene = Scene(
            frames.size,
            p,
            [v_scene.cameras[i] for i in frames],
            v_scene.uv[frames],
            v_scene.valid[frames],
        )
        x = solve_structure(sub_a, sub_scene, config.weights)
        order_local = extract_sequencing(sub_a)
        targets.append(
            TargetReconstruction(
                [sources[i] for i in frames],
                frames,
                frames[order_local],
                x,
                sub_a,
            )
        )
    return MultiTargetResult(assignments, sources, targets, result)
