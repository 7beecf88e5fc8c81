"""Command-line surface.

Every subcommand is a pure function of its inputs, flags and seed:
rerunning with the same arguments rewrites the same bytes (wall-clock
columns in training metrics are the one documented exception). Failures
raise package errors, which the top level serializes as one JSON object
on stdout and a readable message on stderr, exiting nonzero.

Scene directories hold ``scene.json`` plus ``observations.csv``;
ground truth, when present, is ``gt.csv`` alongside.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import apps, sceneio
from .bench import (
    RigConfig,
    SamplingConfig,
    decimate_joints,
    inject_noise,
    motion_from_spec,
    sequencing_accuracy,
    simulate_scene,
    structure_errors,
)
from .bench.metrics import order_agreement
from .errors import MotionGraphError, SchemaError
from .geometry import TrajectoryMatrix, pseudo_triangulate
from .graphopt import ObjectiveWeights
from .net import config_meta, save_checkpoint
from .pipeline import PipelineConfig, load_model, run_dloe, run_inference, scenario_view
from .rng import substream
from .train import TrainConfig, TrainItem, cascade_train, write_metrics_csv


def _load_weights(path) -> ObjectiveWeights:
    doc = json.loads(Path(path).read_text())
    known = {"lambdaS": "lambda_s", "lambdaT": "lambda_t", "lambdaO": "lambda_o"}
    bad = [k for k in doc if k not in known]
    if bad:
        raise SchemaError([f"weights file: unknown fields {bad}"])
    return ObjectiveWeights(**{dest: float(doc[src]) for src, dest in known.items() if src in doc})


def _load_scene_dir(path):
    scene_dir = Path(path)
    scene_file = scene_dir / "scene.json"
    obs_file = scene_dir / "observations.csv"
    if not scene_file.exists():
        raise SchemaError([f"{scene_file}: missing"])
    return sceneio.load_scene(scene_file, obs_file if obs_file.exists() else None)


def _pipeline_config(args) -> PipelineConfig:
    weights = _load_weights(args.weights) if getattr(args, "weights", None) else ObjectiveWeights()
    return PipelineConfig(
        scenario=args.scenario,
        k=args.k,
        q=args.q,
        weights=weights,
        seed=args.seed,
        max_iters=getattr(args, "iters", 50),
        tol=getattr(args, "tol", 1e-6),
    )


def _int_tuple(text: str) -> tuple:
    return tuple(int(v) for v in text.split(","))


def _cmd_simulate(args) -> int:
    rig = RigConfig() if args.rig is None else RigConfig(**json.loads(Path(args.rig).read_text()))
    motion = motion_from_spec(args.motion)
    sim = simulate_scene(motion, rig, SamplingConfig(rate=args.hz, n_frames=args.frames))
    scene = inject_noise(sim.scene, args.noise, substream(args.seed, "noise"))
    scene = decimate_joints(scene, args.missing, substream(args.seed, "missing"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sceneio.save_scene(out / "scene.json", scene)
    sceneio.save_observations(out / "observations.csv", scene)
    gt = TrajectoryMatrix.from_points(sim.x_gt)
    sceneio.save_trajectory(out / "gt.csv", gt)
    print(json.dumps({"frames": scene.n_frames, "joints": scene.n_joints, "out": str(out)}))
    return 0


def _cmd_init(args) -> int:
    scene = scenario_view(_load_scene_dir(args.scene), args.scenario)
    x = pseudo_triangulate(scene)
    sceneio.save_trajectory(args.out, x)
    return 0


def _cmd_dloe(args) -> int:
    scene = _load_scene_dir(args.scene)
    result = run_dloe(scene, _pipeline_config(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sceneio.save_trajectory(out / "est.csv", result.x)
    sceneio.save_affinity(out / "affinity.csv", result.affinity)
    with open(out / "objective.csv", "w", newline="") as fh:
        fh.write("iteration,value\n")
        for i, value in enumerate(result.trace):
            fh.write(f"{i},{float(value)!r}\n")
    return 0


def _cmd_infer(args) -> int:
    scene = _load_scene_dir(args.scene)
    params, net_config, use_pointnet = load_model(args.checkpoint)
    result = run_inference(scene, params, net_config, _pipeline_config(args), use_pointnet)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sceneio.save_trajectory(out / "est.csv", result.x)
    sceneio.save_affinity(out / "affinity.csv", result.affinity_sparse)
    return 0


def _cmd_train(args) -> int:
    data = Path(args.data)
    seq_dirs = sorted(d for d in data.iterdir() if (d / "scene.json").exists())
    if not seq_dirs:
        raise SchemaError([f"{data}: no sequence directories with scene.json"])
    items = []
    for d in seq_dirs:
        scene = _load_scene_dir(d)
        if scene.global_order is None:
            raise SchemaError([f"{d}: training sequences need a ground-truth order (globalOrder)"])
        gt_file = d / "gt.csv"
        x_gt = sceneio.load_trajectory(gt_file).points() if gt_file.exists() else None
        items.append(TrainItem(scene, scene.global_order, x_gt))

    params = net_config = None
    if args.init_checkpoint:
        params, net_config, _ = load_model(args.init_checkpoint)
    config = TrainConfig(
        seed=args.seed,
        stage=args.stage,
        supervision=args.supervision,
        epochs=args.epochs,
        learning_rate=args.lr,
        k=args.k,
        q=args.q,
        noise_px=tuple(float(v) for v in args.noise.split(",")),
        widths=_int_tuple(args.widths),
        kernel_hidden=_int_tuple(args.kernel_hidden),
        use_pointnet=args.use_pointnet,
        cold_start=args.cold_start,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = cascade_train(items, config, params=params, net_config=net_config, checkpoint_dir=out)
    save_checkpoint(out / "final", result.params, {"model": config_meta(result.net_config, config.use_pointnet), "stage": config.stage})
    write_metrics_csv(out / "metrics.csv", result.metrics)
    last = result.metrics[-1] if result.metrics else {}
    print(json.dumps({"epochs": len(result.metrics), "finalLoss": last.get("loss"), "out": str(out)}))
    return 0


def _cmd_segment(args) -> int:
    a = sceneio.load_affinity(args.affinity)
    components = apps.segmentation_summary(a, args.tau)
    if args.out:
        sceneio.save_segmentation(args.out, components)
    else:
        print(json.dumps({"components": components}))
    return 0


def _cmd_multitarget(args) -> int:
    scene_dir = Path(args.scene)
    scene = sceneio.load_scene(scene_dir / "scene.json")
    uv, valid = sceneio.load_grouped_observations(
        scene_dir / "observations.csv", scene.n_frames, scene.n_joints
    )
    params = net_config = None
    use_pointnet = False
    if args.checkpoint:
        params, net_config, use_pointnet = load_model(args.checkpoint)
    result = apps.multi_target_reconstruct(
        scene.cameras, uv, valid, args.m, _pipeline_config(args),
        params=params, net_config=net_config, use_pointnet=use_pointnet,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    components = []
    for t, target in enumerate(result.targets):
        sceneio.save_trajectory(out / f"target{t}.csv", target.x)
        components.append({"frames": [int(f) for f, _ in target.sources], "order": target.order.tolist()})
    sceneio.save_segmentation(out / "segmentation.json", components)
    print(json.dumps({"targets": len(result.targets), "out": str(out)}))
    return 0


def _cmd_eval(args) -> int:
    est = sceneio.load_trajectory(args.est)
    gt = sceneio.load_trajectory(args.gt)
    mask = est.mask & gt.mask
    metrics = structure_errors(est, gt, mask)
    out = {
        "meanErr": metrics["meanErr"],
        "medErr": metrics["medErr"],
        "perFrame": [None if np.isnan(v) else v for v in metrics["perFrame"]],
    }
    if args.affinity and args.scene:
        scene = _load_scene_dir(args.scene)
        if scene.global_order is None:
            raise SchemaError([f"{args.scene}: scene has no globalOrder, cannot score sequencing"])
        a = sceneio.load_affinity(args.affinity, scene.n_frames)
        out["seqAcc"] = sequencing_accuracy(a, scene.global_order)
        _, labels = apps.segment_events(a)
        counts = np.bincount(labels)
        frames = np.where(labels == counts.argmax())[0]
        order = apps.extract_sequencing(a, frames)
        gt_pos = np.empty(scene.n_frames, dtype=np.int64)
        gt_pos[scene.global_order] = np.arange(scene.n_frames)
        out["tau"] = order_agreement(order, frames[np.argsort(gt_pos[frames], kind="stable")])
    print(json.dumps(out))
    return 0


def _cmd_validate(args) -> int:
    scene = _load_scene_dir(args.scene)
    print(json.dumps({"frames": scene.n_frames, "joints": scene.n_joints, "valid": int(scene.valid.sum())}))
    return 0


def _add_pipeline_flags(p: argparse.ArgumentParser, with_iters: bool = False) -> None:
    p.add_argument("--scenario", choices=("independent", "unsync", "sync"), default="independent")
    p.add_argument("--k", type=int, default=6, help="support-domain size")
    p.add_argument("--q", type=int, default=2, help="affinity entries kept per row")
    p.add_argument("--weights", default=None, help="objective weights JSON file")
    p.add_argument("--seed", type=int, default=0)
    if with_iters:
        p.add_argument("--iters", type=int, default=50)
        p.add_argument("--tol", type=float, default=1e-6)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motiongraph", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="reserved; the orchestrator is single-threaded")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a motion through the virtual rig")
    p.add_argument("--motion", required=True, help="mocap CSV path or gen:<preset>?k=v spec")
    p.add_argument("--rig", default=None, help="rig config JSON")
    p.add_argument("--hz", type=float, default=30.0)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.0, help="pixel noise sigma")
    p.add_argument("--missing", type=float, default=0.0, help="fraction of observations to drop")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("init", help="pseudo-triangulate a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--scenario", choices=("independent", "unsync", "sync"), default="independent")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_init)

    p = sub.add_parser("dloe", help="classical alternating reconstruction")
    p.add_argument("--scene", required=True)
    _add_pipeline_flags(p, with_iters=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_dloe)

    p = sub.add_parser("train", help="cascaded training on a directory of sequences")
    p.add_argument("--data", required=True, help="directory of per-sequence scene directories")
    p.add_argument("--stage", type=int, choices=(1, 2), default=1)
    p.add_argument("--supervision", choices=("sequencingOnly", "full3D"), default="sequencingOnly")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--noise", default="1,5", help="pixel noise range LO,HI")
    p.add_argument("--widths", default="64,32,16,8")
    p.add_argument("--kernel-hidden", default="16,16")
    p.add_argument("--use-pointnet", action="store_true")
    p.add_argument("--init-checkpoint", default=None, help="stage-1 checkpoint to continue from")
    p.add_argument("--cold-start", action="store_true", help="allow stage 2 without a stage-1 checkpoint")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("infer", help="network inference with a trained checkpoint")
    p.add_argument("--scene", required=True)
    p.add_argument("--checkpoint", required=True)
    _add_pipeline_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_infer)

    p = sub.add_parser("segment", help="split an affinity into event components")
    p.add_argument("--affinity", required=True)
    p.add_argument("--tau", type=float, default=1e-6)
    p.add_argument("--out", default=None, help="segmentation JSON path (stdout if omitted)")
    p.set_defaults(fn=_cmd_segment)

    p = sub.add_parser("multitarget", help="reconstruct M targets from grouped observations")
    p.add_argument("--scene", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--checkpoint", default=None)
    _add_pipeline_flags(p, with_iters=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_multitarget)

    p = sub.add_parser("eval", help="score an estimate against ground truth")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--affinity", default=None)
    p.add_argument("--scene", default=None, help="scene directory providing the ground-truth order")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("validate", help="check scene files against the schema")
    p.add_argument("--scene", required=True)
    p.set_defaults(fn=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.fn(args)
    except MotionGraphError as exc:
        print(json.dumps(exc.payload()))
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
