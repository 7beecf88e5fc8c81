"""File formats: scene JSON, observation/trajectory/affinity CSVs.

All floats are written with ``repr`` so that values round-trip exactly
and output files are bitwise reproducible for a fixed input.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .geometry import Camera, Scene, Stream, TrajectoryMatrix


def scene_to_dict(scene: Scene) -> dict:
    out = {
        "frames": scene.n_frames,
        "joints": scene.n_joints,
        "cameras": [
            {
                "fx": cam.fx,
                "fy": cam.fy,
                "cx": cam.cx,
                "cy": cam.cy,
                "R": [float(v) for v in cam.rotation.reshape(9)],
                "t": [float(v) for v in cam.translation],
            }
            for cam in scene.cameras
        ],
    }
    if scene.streams is not None:
        out["streams"] = [{"id": s.id, "frameOrder": list(map(int, s.frame_order))} for s in scene.streams]
    if scene.global_order is not None:
        out["globalOrder"] = [int(v) for v in scene.global_order]
    return out


def validate_scene_dict(doc: dict) -> list[str]:
    """Shallow schema validation; returns a list of offending field paths."""
    problems = []
    for key in ("frames", "joints", "cameras"):
        if key not in doc:
            problems.append(f"missing field '{key}'")
    if problems:
        return problems
    if not isinstance(doc["frames"], int) or doc["frames"] <= 0:
        problems.append("frames: must be a positive integer")
    if not isinstance(doc["joints"], int) or doc["joints"] <= 0:
        problems.append("joints: must be a positive integer")
    cams = doc["cameras"]
    if not isinstance(cams, list):
        problems.append("cameras: must be a list")
        return problems
    if isinstance(doc["frames"], int) and len(cams) != doc["frames"]:
        problems.append(f"cameras: expected {doc['frames']} entries, got {len(cams)}")
    for i, cam in enumerate(cams):
        for key in ("fx", "fy", "cx", "cy", "R", "t"):
            if key not in cam:
                problems.append(f"cameras[{i}].{key}: missing")
        if "R" in cam and len(cam["R"]) != 9:
            problems.append(f"cameras[{i}].R: expected 9 values, got {len(cam['R'])}")
        if "t" in cam and len(cam["t"]) != 3:
            problems.append(f"cameras[{i}].t: expected 3 values, got {len(cam['t'])}")
    if "globalOrder" in doc and isinstance(doc["frames"], int):
        if sorted(doc["globalOrder"]) != list(range(doc["frames"])):
            problems.append("globalOrder: not a permutation of 0..frames-1")
    if "streams" in doc:
        for i, s in enumerate(doc["streams"]):
            if "id" not in s or "frameOrder" not in s:
                problems.append(f"streams[{i}]: requires 'id' and 'frameOrder'")
    return problems


def scene_from_dict(doc: dict, uv: np.ndarray | None = None, valid: np.ndarray | None = None) -> Scene:
    problems = validate_scene_dict(doc)
    if problems:
        raise SchemaError(problems)
    n, p = doc["frames"], doc["joints"]
    cameras = [
        Camera(
            fx=float(c["fx"]),
            fy=float(c["fy"]),
            cx=float(c["cx"]),
            cy=float(c["cy"]),
            rotation=np.array(c["R"], dtype=np.float64).reshape(3, 3),
            translation=np.array(c["t"], dtype=np.float64),
        )
        for c in doc["cameras"]
    ]
    streams = None
    if "streams" in doc:
        streams = [Stream(int(s["id"]), [int(f) for f in s["frameOrder"]]) for s in doc["streams"]]
    global_order = np.array(doc["globalOrder"], dtype=np.int64) if "globalOrder" in doc else None
    if uv is None:
        uv = np.full((n, p, 2), np.nan)
        valid = np.zeros((n, p), dtype=bool)
    return Scene(n, p, cameras, uv, valid, streams, global_order)


def save_scene(path, scene: Scene) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1) + "\n")


def load_scene(path, observations_path=None) -> Scene:
    doc = json.loads(Path(path).read_text())
    scene = scene_from_dict(doc)
    if observations_path is not None:
        uv, valid = load_observations(observations_path, scene.n_frames, scene.n_joints)
        scene.uv, scene.valid = uv, valid
    return scene


def save_observations(path, scene: Scene) -> None:
    """Write valid observations only; a missing row means a missing entry."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "joint", "u", "v"])
        for n in range(scene.n_frames):
            for p in np.where(scene.valid[n])[0]:
                writer.writerow([n, p, repr(float(scene.uv[n, p, 0])), repr(float(scene.uv[n, p, 1]))])


def load_observations(path, n_frames: int, n_joints: int):
    uv = np.full((n_frames, n_joints, 2), np.nan)
    valid = np.zeros((n_frames, n_joints), dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != ["frame", "joint", "u", "v"]:
            raise SchemaError([f"{path}: expected header frame,joint,u,v"])
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                n, p = int(row[0]), int(row[1])
                u, v = float(row[2]), float(row[3])
            except (ValueError, IndexError):
                raise SchemaError([f"{path}:{lineno}: malformed row {row!r}"]) from None
            if not (0 <= n < n_frames and 0 <= p < n_joints):
                raise SchemaError([f"{path}:{lineno}: observation ({n}, {p}) out of range"])
            if valid[n, p]:
                raise SchemaError([f"{path}:{lineno}: duplicate observation ({n}, {p})"])
            uv[n, p] = (u, v)
            valid[n, p] = True
    return uv, valid


def load_grouped_observations(path, n_frames: int, n_joints: int):
    """Observations CSV with an extra ``shape`` column for multi-target
    input. Returns (uv, valid, group) arrays keyed by (frame, group, joint);
    group defaults to 0 when the column is absent."""
    rows = []
    max_group = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != ["frame", "joint", "u", "v"]:
            raise SchemaError([f"{path}: expected header frame,joint,u,v[,shape]"])
        has_group = len(header) >= 5 and header[4].strip() == "shape"
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                n, p = int(row[0]), int(row[1])
                u, v = float(row[2]), float(row[3])
                g = int(row[4]) if has_group and len(row) > 4 else 0
            except (ValueError, IndexError):
                raise SchemaError([f"{path}:{lineno}: malformed row {row!r}"]) from None
            if not (0 <= n < n_frames and 0 <= p < n_joints):
                raise SchemaError([f"{path}:{lineno}: observation ({n}, {p}) out of range"])
            rows.append((n, g, p, u, v))
            max_group = max(max_group, g)
    m = max_group + 1
    uv = np.full((n_frames, m, n_joints, 2), np.nan)
    valid = np.zeros((n_frames, m, n_joints), dtype=bool)
    for n, g, p, u, v in rows:
        if valid[n, g, p]:
            raise SchemaError([f"{path}: duplicate observation ({n}, shape {g}, joint {p})"])
        uv[n, g, p] = (u, v)
        valid[n, g, p] = True
    return uv, valid


def _mask_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".mask" + path.suffix)


def save_trajectory(path, x: TrajectoryMatrix) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame"] + [f"c{i}" for i in range(x.data.shape[1])])
        for n in range(x.n_frames):
            writer.writerow([n] + [repr(float(v)) for v in x.data[n]])
    with open(_mask_path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame"] + [f"j{i}" for i in range(x.n_joints)])
        for n in range(x.n_frames):
            writer.writerow([n] + [int(v) for v in x.mask[n]])


def load_trajectory(path) -> TrajectoryMatrix:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                rows.append([float(v) for v in row[1:]])
    data = np.array(rows, dtype=np.float64)
    mask_file = _mask_path(path)
    if mask_file.exists():
        mrows = []
        with open(mask_file, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                if row:
                    mrows.append([bool(int(v)) for v in row[1:]])
        mask = np.array(mrows, dtype=bool)
    else:
        mask = np.ones((data.shape[0], data.shape[1] // 3), dtype=bool)
    return TrajectoryMatrix(data, mask)


def save_affinity(path, a: np.ndarray) -> None:
    """Sparse triplet CSV: i,j,value for nonzero entries."""
    a = np.asarray(a)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "value", "n"])
        first = True
        for i, j in zip(*np.nonzero(a)):
            row = [int(i), int(j), repr(float(a[i, j]))]
            # Matrix size rides along on the first row so an empty or
            # sparse matrix reloads at full size.
            row.append(a.shape[0] if first else "")
            first = False
            writer.writerow(row)
        if first:
            writer.writerow([0, 0, repr(0.0), a.shape[0]])


def load_affinity(path, n: int | None = None) -> np.ndarray:
    triplets = []
    size = n
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if not row:
                continue
            i, j, v = int(row[0]), int(row[1]), float(row[2])
            if size is None and len(row) > 3 and row[3] != "":
                size = int(row[3])
            triplets.append((i, j, v))
    if size is None:
        size = 1 + max(max(i, j) for i, j, _ in triplets) if triplets else 0
    a = np.zeros((size, size))
    for i, j, v in triplets:
        a[i, j] = v
    return a


def save_segmentation(path, components: list[dict]) -> None:
    doc = {"components": [{"frames": list(map(int, c["frames"])), "order": list(map(int, c["order"]))} for c in components]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_segmentation(path) -> list[dict]:
    doc = json.loads(Path(path).read_text())
    if "components" not in doc:
        raise SchemaError(["missing field 'components'"])
    return doc["components"]
