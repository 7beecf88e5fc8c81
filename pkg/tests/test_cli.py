"""Command-line surface: round trips, error channel, determinism."""

import csv
import json

import numpy as np
import pytest

from motiongraph import sceneio
from motiongraph.cli import main
from motiongraph.geometry import Scene, project

from synth import helix_points, ring_cameras

MOTION = "gen:helix?joints=3&tempo=0.2&seed=1"


def _run(capsys, argv):
    capsys.readouterr()
    rc = main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def _simulate(tmp_path, name="scene", frames=10, extra=()):
    out = tmp_path / name
    rc = main(
        ["simulate", "--motion", MOTION, "--frames", str(frames), "--out", str(out), *extra]
    )
    assert rc == 0
    return out


class TestSimulate:
    def test_writes_scene_directory(self, tmp_path, capsys):
        out = tmp_path / "scene"
        rc, stdout, _ = _run(
            capsys, ["simulate", "--motion", MOTION, "--frames", "8", "--out", str(out)]
        )
        assert rc == 0
        doc = json.loads(stdout)
        assert doc["frames"] == 8
        assert doc["joints"] == 3
        assert (out / "scene.json").exists()
        assert (out / "observations.csv").exists()
        assert (out / "gt.csv").exists()

    def test_missing_flag_drops_observations(self, tmp_path):
        full = _simulate(tmp_path, "full")
        holey = _simulate(tmp_path, "holey", extra=("--missing", "0.4"))
        n_full = sceneio.load_scene(full / "scene.json", full / "observations.csv").valid.sum()
        n_holey = sceneio.load_scene(holey / "scene.json", holey / "observations.csv").valid.sum()
        assert n_holey == n_full - round(0.4 * n_full)

    def test_validate_round_trip(self, tmp_path, capsys):
        out = _simulate(tmp_path)
        rc, stdout, _ = _run(capsys, ["validate", "--scene", str(out)])
        assert rc == 0
        doc = json.loads(stdout)
        assert doc["frames"] == 10
        assert doc["valid"] == 30


class TestInitAndDloe:
    def test_init_writes_trajectory(self, tmp_path, capsys):
        scene = _simulate(tmp_path)
        est = tmp_path / "init.csv"
        rc, _, _ = _run(capsys, ["init", "--scene", str(scene), "--out", str(est)])
        assert rc == 0
        x = sceneio.load_trajectory(est)
        assert x.data.shape == (10, 9)

    def test_dloe_outputs_and_objective_trace(self, tmp_path, capsys):
        scene = _simulate(tmp_path)
        out = tmp_path / "dloe"
        rc, _, _ = _run(
            capsys, ["dloe", "--scene", str(scene), "--k", "4", "--iters", "5", "--out", str(out)]
        )
        assert rc == 0
        assert (out / "est.csv").exists()
        a = sceneio.load_affinity(out / "affinity.csv")
        assert a.shape == (10, 10)
        with open(out / "objective.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        values = [float(r["value"]) for r in rows]
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))

    def test_dloe_reruns_bitwise_identical(self, tmp_path, capsys):
        scene = _simulate(tmp_path)
        args = ["dloe", "--scene", str(scene), "--k", "4", "--iters", "4"]
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main([*args, "--out", str(out1)]) == 0
        assert main([*args, "--out", str(out2)]) == 0
        capsys.readouterr()
        for name in ("est.csv", "affinity.csv", "objective.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_eval_scores_estimate(self, tmp_path, capsys):
        scene = _simulate(tmp_path)
        out = tmp_path / "dloe"
        main(["dloe", "--scene", str(scene), "--k", "4", "--out", str(out)])
        capsys.readouterr()
        rc, stdout, _ = _run(
            capsys,
            [
                "eval",
                "--est", str(out / "est.csv"),
                "--gt", str(scene / "gt.csv"),
                "--affinity", str(out / "affinity.csv"),
                "--scene", str(scene),
            ],
        )
        assert rc == 0
        doc = json.loads(stdout)
        assert doc["meanErr"] < 0.05
        assert 0.0 <= doc["seqAcc"] <= 1.0
        assert 0.0 <= doc["tau"] <= 1.0
        assert len(doc["perFrame"]) == 10

    def test_weights_file_accepted(self, tmp_path, capsys):
        scene = _simulate(tmp_path)
        weights = tmp_path / "weights.json"
        weights.write_text(json.dumps({"lambdaS": 1.0, "lambdaT": 0.1, "lambdaO": 10.0}))
        out = tmp_path / "dloe"
        rc, _, _ = _run(
            capsys,
            ["dloe", "--scene", str(scene), "--weights", str(weights), "--iters", "2", "--out", str(out)],
        )
        assert rc == 0

    def test_unknown_weight_key_rejected(self, tmp_path, capsys):
        scene = _simulate(tmp_path)
        weights = tmp_path / "weights.json"
        weights.write_text(json.dumps({"lambdaZ": 1.0}))
        rc, stdout, stderr = _run(
            capsys,
            ["dloe", "--scene", str(scene), "--weights", str(weights), "--out", str(tmp_path / "x")],
        )
        assert rc == 2
        assert json.loads(stdout)["error"] == "SchemaError"
        assert stderr.startswith("error:")


class TestTrainAndInfer:
    def test_train_then_infer_round_trip(self, tmp_path, capsys):
        data = tmp_path / "data"
        data.mkdir()
        for i in range(2):
            main(
                [
                    "simulate", "--motion", f"gen:helix?joints=2&tempo=0.2&seed={i}",
                    "--frames", "6", "--out", str(data / f"seq{i}"),
                ]
            )
        run = tmp_path / "run"
        rc, stdout, _ = _run(
            capsys,
            [
                "train", "--data", str(data), "--epochs", "2", "--seed", "7",
                "--k", "3", "--q", "2", "--widths", "8,4", "--kernel-hidden", "8,8",
                "--noise", "0,0", "--out", str(run),
            ],
        )
        assert rc == 0
        doc = json.loads(stdout)
        assert doc["epochs"] == 2
        assert (run / "final" / "manifest.json").exists()
        assert len((run / "metrics.csv").read_text().splitlines()) == 3

        held_out = tmp_path / "held"
        main(
            [
                "simulate", "--motion", "gen:helix?joints=2&tempo=0.2&seed=9",
                "--frames", "6", "--out", str(held_out),
            ]
        )
        est = tmp_path / "infer"
        rc, _, _ = _run(
            capsys,
            [
                "infer", "--scene", str(held_out), "--checkpoint", str(run / "final"),
                "--k", "3", "--q", "2", "--out", str(est),
            ],
        )
        assert rc == 0
        a = sceneio.load_affinity(est / "affinity.csv")
        assert a.shape == (6, 6)
        assert int(np.max((a > 0).sum(axis=1))) <= 2

        # A scene with a different joint count must fail loudly, not in
        # the middle of the network.
        wrong = _simulate(tmp_path, "wrong", frames=6)
        rc, stdout, _ = _run(
            capsys,
            ["infer", "--scene", str(wrong), "--checkpoint", str(run / "final"), "--out", str(est)],
        )
        assert rc == 2
        assert json.loads(stdout)["error"] == "SchemaError"

    def test_train_requires_sequences(self, tmp_path, capsys):
        empty = tmp_path / "data"
        empty.mkdir()
        rc, stdout, _ = _run(
            capsys, ["train", "--data", str(empty), "--seed", "0", "--out", str(tmp_path / "run")]
        )
        assert rc == 2
        assert json.loads(stdout)["error"] == "SchemaError"


class TestSegment:
    def test_components_to_stdout(self, tmp_path, capsys):
        a = np.zeros((5, 5))
        a[0, 1] = a[1, 2] = 0.5
        a[3, 4] = 0.5
        sceneio.save_affinity(tmp_path / "a.csv", a)
        rc, stdout, _ = _run(capsys, ["segment", "--affinity", str(tmp_path / "a.csv")])
        assert rc == 0
        doc = json.loads(stdout)
        assert len(doc["components"]) == 2
        assert doc["components"][0]["frames"] == [0, 1, 2]

    def test_components_to_file(self, tmp_path, capsys):
        a = np.zeros((3, 3))
        a[0, 1] = a[1, 2] = 0.5
        sceneio.save_affinity(tmp_path / "a.csv", a)
        out = tmp_path / "seg.json"
        rc, _, _ = _run(
            capsys, ["segment", "--affinity", str(tmp_path / "a.csv"), "--out", str(out)]
        )
        assert rc == 0
        assert len(sceneio.load_segmentation(out)) == 1


class TestMultitarget:
    def _write_grouped_scene(self, tmp_path, n=10, p=2):
        pts_a = helix_points(n, p, turns=0.15, seed=1)
        pts_b = helix_points(n, p, turns=0.15, seed=2) + np.array([1.5, 0.0, 0.0])
        ring = ring_cameras(4)
        cams = [ring[i % 4] for i in range(n)]
        scene_dir = tmp_path / "grouped"
        scene_dir.mkdir()
        shell = Scene(n, p, cams, np.zeros((n, p, 2)), np.zeros((n, p), dtype=bool))
        sceneio.save_scene(scene_dir / "scene.json", shell)
        with open(scene_dir / "observations.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "joint", "u", "v", "shape"])
            for i in range(n):
                for g, pts in enumerate((pts_a, pts_b)):
                    for j in range(p):
                        u, v = project(cams[i], pts[i, j])
                        w.writerow([i, j, repr(float(u)), repr(float(v)), g])
        return scene_dir

    def test_two_targets_written(self, tmp_path, capsys):
        scene_dir = self._write_grouped_scene(tmp_path)
        out = tmp_path / "targets"
        rc, stdout, _ = _run(
            capsys,
            [
                "multitarget", "--scene", str(scene_dir), "--m", "2",
                "--k", "4", "--iters", "5", "--out", str(out),
            ],
        )
        assert rc == 0
        assert json.loads(stdout)["targets"] == 2
        assert (out / "target0.csv").exists()
        assert (out / "target1.csv").exists()
        seg = sceneio.load_segmentation(out / "segmentation.json")
        assert len(seg) == 2
        assert len(seg[0]["frames"]) == 10


class TestErrorChannel:
    def test_missing_scene_reports_json(self, tmp_path, capsys):
        rc, stdout, stderr = _run(
            capsys, ["dloe", "--scene", str(tmp_path / "nope"), "--out", str(tmp_path / "x")]
        )
        assert rc == 2
        doc = json.loads(stdout)
        assert doc["error"] == "SchemaError"
        assert "scene.json" in doc["message"]
        assert stderr.startswith("error:")

    def test_bad_pipeline_shape_reports_json(self, tmp_path, capsys):
        scene = _simulate(tmp_path)
        rc, stdout, _ = _run(
            capsys,
            ["dloe", "--scene", str(scene), "--k", "1", "--q", "2", "--out", str(tmp_path / "x")],
        )
        assert rc == 2
        assert json.loads(stdout)["error"] == "SchemaError"

    def test_threads_must_be_positive(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(["--threads", "0", "validate", "--scene", str(tmp_path)])
