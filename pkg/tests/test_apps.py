"""Event segmentation, sequencing extraction, multi-target capture."""

import numpy as np
import pytest

from motiongraph.apps import (
    component_frames,
    extract_sequencing,
    multi_target_reconstruct,
    segment_events,
    segmentation_summary,
)
from motiongraph.errors import ClusterCountError, SchemaError
from motiongraph.pipeline import PipelineConfig, run_dloe
from motiongraph.geometry import Scene, project

from synth import helix_points, ring_cameras


def _chain_affinity(order, n=None):
    order = np.asarray(order)
    n = order.size if n is None else n
    a = np.zeros((n, n))
    for u, v in zip(order[:-1], order[1:]):
        a[u, v] = a[v, u] = 0.5
    return a


class TestSegmentEvents:
    def test_two_blocks(self):
        a = np.zeros((6, 6))
        a[:3, :3] = _chain_affinity([0, 1, 2])
        a[3:, 3:] = _chain_affinity([0, 1, 2])
        n_comp, labels = segment_events(a)
        assert n_comp == 2
        assert labels.tolist() == [0, 0, 0, 1, 1, 1]

    def test_threshold_cuts_weak_links(self):
        a = _chain_affinity([0, 1, 2])
        a[1, 2] = a[2, 1] = 1e-9
        n_comp, _ = segment_events(a, tau=1e-6)
        assert n_comp == 2

    def test_asymmetric_links_still_connect(self):
        a = np.zeros((3, 3))
        a[0, 1] = 0.4
        a[1, 2] = 0.4
        n_comp, _ = segment_events(a)
        assert n_comp == 1

    def test_component_frames_partition(self):
        labels = np.array([0, 1, 0, 2, 1])
        frames = component_frames(labels)
        assert [f.tolist() for f in frames] == [[0, 2], [1, 4], [3]]


class TestExtractSequencing:
    def test_recovers_path_graph_order(self):
        chain = [3, 0, 2, 4, 1]
        a = _chain_affinity(chain)
        order = extract_sequencing(a)
        assert order.tolist() in (chain, chain[::-1])

    def test_canonical_direction(self):
        order = extract_sequencing(_chain_affinity([3, 0, 2, 4, 1]))
        assert order[0] < order[-1]

    def test_subset_of_frames(self):
        a = np.zeros((6, 6))
        a[:3, :3] = _chain_affinity([2, 0, 1], n=3)
        a[3:, 3:] = _chain_affinity([0, 1, 2], n=3)
        order = extract_sequencing(a, frames=np.array([3, 4, 5]))
        assert order.tolist() == [3, 4, 5]

    def test_single_frame_passthrough(self):
        order = extract_sequencing(np.zeros((4, 4)), frames=np.array([2]))
        assert order.tolist() == [2]

    def test_ambiguous_spectrum_warns(self):
        with pytest.warns(UserWarning):
            order = extract_sequencing(np.zeros((4, 4)))
        assert sorted(order.tolist()) == [0, 1, 2, 3]

    def test_summary_covers_all_components(self):
        a = np.zeros((5, 5))
        a[:3, :3] = _chain_affinity([1, 0, 2], n=3)
        a[3:, 3:] = _chain_affinity([0, 1], n=2)
        summary = segmentation_summary(a)
        assert len(summary) == 2
        assert summary[0]["frames"] == [0, 1, 2]
        assert summary[1]["frames"] == [3, 4]
        assert summary[1]["order"] == [3, 4]


def _two_target_observations(n=12, p=3, separation=1.5, swap_odd=True):
    """Grouped 2D observations of two far-apart, slowly moving subjects,
    with the group slots shuffled on odd frames so grouping carries no
    identity."""
    pts_a = helix_points(n, p, turns=0.15, seed=1)
    pts_b = helix_points(n, p, turns=0.15, seed=2) + np.array([separation, 0.0, 0.0])
    ring = ring_cameras(4)
    cams = [ring[i % 4] for i in range(n)]
    uv = np.zeros((n, 2, p, 2))
    true_group = np.zeros((n, 2), dtype=np.int64)
    for i in range(n):
        slots = (1, 0) if swap_odd and i % 2 else (0, 1)
        for target, slot in enumerate(slots):
            pts = pts_a if target == 0 else pts_b
            for j in range(p):
                uv[i, slot, j] = project(cams[i], pts[i, j])
            true_group[i, slot] = target
    valid = np.ones((n, 2, p), dtype=bool)
    return cams, uv, valid, true_group


def _config(**kw):
    kw.setdefault("scenario", "independent")
    kw.setdefault("k", 4)
    kw.setdefault("q", 2)
    kw.setdefault("max_iters", 5)
    return PipelineConfig(**kw)


class TestMultiTarget:
    def test_single_target_matches_pipeline_bitwise(self):
        pts = helix_points(10, 3, seed=4)
        ring = ring_cameras(4)
        cams = [ring[i % 4] for i in range(10)]
        uv = np.zeros((10, 3, 2))
        for i in range(10):
            for j in range(3):
                uv[i, j] = project(cams[i], pts[i, j])
        config = _config()
        direct = run_dloe(Scene(10, 3, cams, uv, np.ones((10, 3), dtype=bool)), config)
        grouped = multi_target_reconstruct(
            cams, uv[:, None], np.ones((10, 1, 3), dtype=bool), m=1, config=config
        )
        assert np.array_equal(grouped.targets[0].x.data, direct.x.data)
        assert np.array_equal(grouped.targets[0].affinity, direct.affinity)
        assert grouped.assignments.tolist() == [0] * 10

    def test_two_targets_separate_cleanly(self):
        cams, uv, valid, true_group = _two_target_observations()
        result = multi_target_reconstruct(cams, uv, valid, m=2, config=_config())
        assert len(result.targets) == 2
        assert result.assignments.size == 24
        for target in result.targets:
            groups = {true_group[frame, slot] for frame, slot in target.sources}
            assert len(groups) == 1
        sizes = sorted(t.frames.size for t in result.targets)
        assert sizes == [12, 12]

    def test_targets_ordered_by_first_frame(self):
        cams, uv, valid, _ = _two_target_observations()
        result = multi_target_reconstruct(cams, uv, valid, m=2, config=_config())
        firsts = [int(t.frames[0]) for t in result.targets]
        assert firsts == sorted(firsts)
        assert result.assignments[0] == 0

    def test_per_target_structure_near_truth(self):
        # Each target must reconstruct in its own subject's neighborhood
        # (the subjects sit 1.5 m apart). A tight error bound is not the
        # point here; with one camera per virtual frame the smoothness
        # terms cost a few centimeters.
        cams, uv, valid, true_group = _two_target_observations()
        result = multi_target_reconstruct(cams, uv, valid, m=2, config=_config())
        pts = {
            0: helix_points(12, 3, turns=0.15, seed=1),
            1: helix_points(12, 3, turns=0.15, seed=2) + np.array([1.5, 0.0, 0.0]),
        }
        for target in result.targets:
            group = true_group[target.sources[0][0], target.sources[0][1]]
            gt = np.stack([pts[group][frame].ravel() for frame, _ in target.sources])
            diff = (target.x.data - gt).reshape(-1, 3)
            err = np.linalg.norm(diff, axis=1).mean()
            assert err < 0.1

    def test_too_many_targets_rejected(self):
        cams, uv, valid, _ = _two_target_observations(n=3)
        with pytest.raises(ClusterCountError) as exc:
            multi_target_reconstruct(cams, uv, valid, m=40, config=_config())
        assert exc.value.requested == 40
        assert len(exc.value.spectrum) > 0

    def test_bad_shapes_rejected(self):
        with pytest.raises(SchemaError):
            multi_target_reconstruct([], np.zeros((2, 3, 2)), np.zeros((2, 3), dtype=bool), 1, _config())

    def test_zero_targets_rejected(self):
        cams, uv, valid, _ = _two_target_observations(n=4)
        with pytest.raises(SchemaError):
            multi_target_reconstruct(cams, uv, valid, m=0, config=_config())
