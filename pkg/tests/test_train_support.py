"""Support-domain builders per scenario and pseudo-ground-truth affinity."""

import numpy as np
import pytest

from motiongraph.errors import EmptySupportError, SchemaError
from motiongraph.geometry import PartnerPolicy, Scene
from motiongraph.train import (
    SCENARIOS,
    build_pseudo_gt_affinity,
    build_support_domain,
    scenario_view,
)

from synth import helix_points, scene_from_points


def _helix_scene(n=12, streams=False, order=False):
    pts = helix_points(n, n_joints=3, seed=1)
    scene = scene_from_points(pts, streams=streams, global_order=order)
    return scene, pts.reshape(n, -1)


class TestScenarioView:
    def test_independent_strips_all_timing(self):
        scene, _ = _helix_scene(streams=True, order=True)
        view = scenario_view(scene, "independent")
        assert view.streams is None
        assert view.global_order is None
        assert np.shares_memory(view.uv, scene.uv)

    def test_unsync_keeps_streams_only(self):
        scene, _ = _helix_scene(streams=True, order=True)
        view = scenario_view(scene, "unsync")
        assert view.streams == scene.streams
        assert view.global_order is None

    def test_sync_keeps_everything(self):
        scene, _ = _helix_scene(streams=True, order=True)
        view = scenario_view(scene, "sync")
        assert view.streams == scene.streams
        assert np.array_equal(view.global_order, scene.global_order)

    def test_unknown_scenario_rejected(self):
        scene, _ = _helix_scene()
        with pytest.raises(SchemaError):
            scenario_view(scene, "semisync")


class TestSyncSupport:
    def test_interior_frame_neighbors(self):
        scene, _ = _helix_scene(10, order=True)
        support = build_support_domain(scene, "sync", k=4)
        assert set(support.neighbors[5].tolist()) == {3, 4, 6, 7}

    def test_boundary_frame_neighbors(self):
        scene, _ = _helix_scene(10, order=True)
        support = build_support_domain(scene, "sync", k=4)
        assert set(support.neighbors[0].tolist()) == {1, 2, 3, 4}

    def test_ties_resolve_to_lower_frame_first(self):
        scene, _ = _helix_scene(10, order=True)
        support = build_support_domain(scene, "sync", k=2)
        # Frames 4 and 6 are both one step away from 5; the lower index wins
        # the first slot.
        assert support.neighbors[5][0] == 4

    def test_permuted_order_respected(self):
        scene, _ = _helix_scene(6, order=True)
        shuffled = Scene(
            scene.n_frames, scene.n_joints, scene.cameras, scene.uv, scene.valid,
            None, np.array([3, 0, 4, 1, 5, 2]),
        )
        support = build_support_domain(shuffled, "sync", k=2)
        # Frame 0 sits at position 1, between frames 3 and 4.
        assert set(support.neighbors[0].tolist()) == {3, 4}

    def test_k_clipped_to_available_frames(self):
        scene, _ = _helix_scene(3, order=True)
        support = build_support_domain(scene, "sync", k=10)
        assert all(len(r) == 2 for r in support.neighbors)


class TestIndependentSupport:
    def test_neighbors_are_descriptor_nearest(self):
        scene, rows = _helix_scene(12)
        support = build_support_domain(scene, "independent", x_init=rows, k=3)
        dist = np.linalg.norm(rows[:, None] - rows[None], axis=2)
        for i, nbrs in enumerate(support.neighbors):
            ranked = np.argsort(dist[i], kind="stable")
            ranked = ranked[ranked != i]
            assert nbrs[0] == ranked[0]

    def test_requires_descriptors(self):
        scene, _ = _helix_scene()
        with pytest.raises(ValueError):
            build_support_domain(scene, "independent")

    def test_unreconstructable_frames_raise(self):
        # Two frames that observe disjoint joints: no common joint means
        # the pair score is capped at the rig scale, which no sane
        # fraction threshold accepts.
        pts = helix_points(2, n_joints=2, seed=3)
        scene = scene_from_points(pts)
        valid = np.array([[True, False], [False, True]])
        scene = Scene(2, 2, scene.cameras, scene.uv, valid, None, None)
        with pytest.raises(EmptySupportError) as exc:
            build_support_domain(scene, "independent", x_init=pts.reshape(2, -1), k=1)
        assert exc.value.frames == [0, 1]

    def test_gating_respects_policy_threshold(self):
        scene, rows = _helix_scene(8)
        strict = PartnerPolicy(max_score_fraction=1e-15)
        rng = np.random.default_rng(0)
        noisy = Scene(
            scene.n_frames, scene.n_joints, scene.cameras,
            scene.uv + rng.normal(0.0, 2.0, scene.uv.shape), scene.valid, None, None,
        )
        with pytest.raises(EmptySupportError):
            build_support_domain(noisy, "independent", x_init=rows, k=3, policy=strict)


class TestUnsyncSupport:
    def test_neighbors_exclude_own_stream(self):
        scene, rows = _helix_scene(12, streams=True)
        stream_of = np.empty(12, dtype=int)
        for s in scene.streams:
            stream_of[s.frame_order] = s.id
        support = build_support_domain(scene, "unsync", x_init=rows, k=4)
        for i, nbrs in enumerate(support.neighbors):
            assert all(stream_of[f] != stream_of[i] for f in nbrs)

    def test_per_stream_runs_are_contiguous(self):
        scene, rows = _helix_scene(16, streams=True)
        support = build_support_domain(scene, "unsync", x_init=rows, k=5)
        pos_in_stream = {}
        for s in scene.streams:
            for p, f in enumerate(s.frame_order):
                pos_in_stream[f] = (s.id, p)
        for nbrs in support.neighbors:
            runs = {}
            for f in nbrs:
                sid, p = pos_in_stream[f]
                runs.setdefault(sid, []).append(p)
            for ps in runs.values():
                ps = sorted(ps)
                assert ps == list(range(ps[0], ps[-1] + 1))

    def test_first_pick_is_global_best_seed(self):
        scene, rows = _helix_scene(12, streams=True)
        support = build_support_domain(scene, "unsync", x_init=rows, k=1)
        stream_of = np.empty(12, dtype=int)
        for s in scene.streams:
            stream_of[s.frame_order] = s.id
        dist = np.linalg.norm(rows[:, None] - rows[None], axis=2)
        for i, nbrs in enumerate(support.neighbors):
            others = np.where(stream_of != stream_of[i])[0]
            best = others[np.argmin(dist[i, others])]
            assert nbrs[0] == best

    def test_missing_streams_rejected(self):
        scene, rows = _helix_scene(8, streams=False)
        with pytest.raises(SchemaError):
            build_support_domain(scene, "unsync", x_init=rows, k=3)


class TestPseudoGtAffinity:
    def test_binary_marks_adjacent_pairs(self):
        order = np.array([2, 0, 3, 1])
        a = build_pseudo_gt_affinity(order, "binary")
        expected = np.zeros((4, 4))
        for u, v in [(2, 0), (0, 3), (3, 1)]:
            expected[u, v] = expected[v, u] = 1.0
        assert np.array_equal(a, expected)

    def test_binary_single_frame_is_zeros(self):
        a = build_pseudo_gt_affinity(np.array([0]), "binary")
        assert np.array_equal(a, np.zeros((1, 1)))

    def test_continuous_rows_sum_to_one(self):
        pts = helix_points(9, n_joints=2, seed=5)
        order = np.arange(9)
        a = build_pseudo_gt_affinity(order, "continuous", x_gt=pts.reshape(9, -1), k=4)
        assert np.allclose(a.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(np.diag(a) == 0.0)
        assert np.all(a >= 0.0)

    def test_continuous_requires_structure(self):
        with pytest.raises(ValueError):
            build_pseudo_gt_affinity(np.arange(4), "continuous")

    def test_unknown_mode_rejected(self):
        with pytest.raises(SchemaError):
            build_pseudo_gt_affinity(np.arange(4), "soft")


def test_scenario_tuple_is_frozen():
    assert SCENARIOS == ("independent", "unsync", "sync")
