"""Virtual multi-camera capture with systematically staggered shutters.

The simulator assigns every output frame to exactly one camera, samples
the motion at that camera's offset timestamps, and keeps only the
projections that land inside the image. No two frames ever share a
timestamp; the ground-truth order is the timestamp order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import BehindCameraError, SchemaError
from ..geometry import Camera, Scene, Stream, project
from .motion import Motion


@dataclass(frozen=True)
class RigConfig:
    """Camera ring looking at the origin.

    ``ring_angles`` (degrees) and ``heights`` (meters) default to an
    even spread at subject height.
    """

    n_cameras: int = 4
    resolution: tuple = (1000, 1000)
    focal: float = 1000.0
    distance: float = 3.0
    ring_angles: tuple | None = None
    heights: tuple | None = None

    def __post_init__(self):
        problems = []
        if self.n_cameras < 1:
            problems.append(f"need at least one camera, got {self.n_cameras}")
        if min(self.resolution) <= 0 or self.focal <= 0 or self.distance <= 0:
            problems.append("resolution, focal length and distance must be positive")
        if self.ring_angles is not None and len(self.ring_angles) != self.n_cameras:
            problems.append(f"{len(self.ring_angles)} ring angles for {self.n_cameras} cameras")
        if self.heights is not None and len(self.heights) != self.n_cameras:
            problems.append(f"{len(self.heights)} heights for {self.n_cameras} cameras")
        if problems:
            raise SchemaError(problems)


@dataclass(frozen=True)
class SamplingConfig:
    """Per-camera shutter schedule.

    Offsets default to a uniform stagger of ``k / (C * rate)`` seconds
    for camera k, which spreads the C shutters evenly inside one sample
    period; explicit offsets must stay pairwise distinct modulo the
    period or two frames could land on the same instant.
    """

    rate: float = 30.0
    n_frames: int = 60
    offsets: tuple | None = None

    def __post_init__(self):
        if self.rate <= 0 or self.n_frames < 1:
            raise SchemaError([f"rate and frame count must be positive, got {self.rate}, {self.n_frames}"])

    def camera_offsets(self, n_cameras: int) -> np.ndarray:
        if self.offsets is None:
            return np.arange(n_cameras) / (n_cameras * self.rate)
        off = np.asarray(self.offsets, dtype=np.float64)
        if off.size != n_cameras:
            raise SchemaError([f"{off.size} offsets for {n_cameras} cameras"])
        period = 1.0 / self.rate
        frac = np.sort(off % period)
        gaps = np.diff(np.concatenate([frac, [frac[0] + period]]))
        if off.size > 1 and gaps.min() < 1e-12:
            raise SchemaError(["camera offsets must be pairwise distinct modulo the sample period"])
        return off


@dataclass
class SimulationResult:
    scene: Scene
    x_gt: np.ndarray
    gt_order: np.ndarray
    timestamps: np.ndarray


def _look_at(position: np.ndarray, target: np.ndarray, focal: float, resolution: tuple) -> Camera:
    z = target - position
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(up, z)
    x = x / np.linalg.norm(x)
    rot = np.stack([x, np.cross(z, x), z])
    return Camera(
        fx=focal,
        fy=focal,
        cx=resolution[0] / 2.0,
        cy=resolution[1] / 2.0,
        rotation=rot,
        translation=-rot @ position,
    )


def build_cameras(rig: RigConfig, target=(0.0, 0.0, 0.0)) -> list[Camera]:
    target = np.asarray(target, dtype=np.float64)
    if rig.ring_angles is not None:
        angles = np.deg2rad(np.asarray(rig.ring_angles, dtype=np.float64))
    else:
        angles = 2.0 * np.pi * np.arange(rig.n_cameras) / rig.n_cameras
    heights = np.zeros(rig.n_cameras) if rig.heights is None else np.asarray(rig.heights, dtype=np.float64)
    cams = []
    for k in range(rig.n_cameras):
        pos = target + np.array(
            [rig.distance * np.cos(angles[k]), rig.distance * np.sin(angles[k]), heights[k]]
        )
        cams.append(_look_at(pos, target, rig.focal, rig.resolution))
    return cams


def simulate_scene(motion: Motion, rig: RigConfig, sampling: SamplingConfig) -> SimulationResult:
    """Render a motion through a staggered camera rig.

    Frames are numbered stream-major (all of camera 0 first), so the
    frame index order intentionally differs from the temporal order;
    ``gt_order`` lists frame ids sorted by timestamp and is also stored
    on the scene as its global order. Projections behind a camera or
    outside the image are dropped; a joint that no frame observes only
    triggers a warning since downstream stages treat it as missing data.
    """
    c = rig.n_cameras
    offsets = sampling.camera_offsets(c)
    counts = np.full(c, sampling.n_frames // c)
    counts[: sampling.n_frames % c] += 1

    cam_models = build_cameras(rig)
    cameras: list[Camera] = []
    timestamps = np.empty(sampling.n_frames)
    streams = []
    start = 0
    t0 = motion.domain[0] if np.isfinite(motion.domain[0]) else 0.0
    for k in range(c):
        ids = list(range(start, start + counts[k]))
        timestamps[ids] = t0 + offsets[k] + np.arange(counts[k]) / sampling.rate
        cameras.extend([cam_models[k]] * counts[k])
        streams.append(Stream(k, ids))
        start += counts[k]
    if timestamps.max() > motion.domain[1] + 1e-9:
        raise ValueError(
            f"capture needs {timestamps.max() - t0:.3f} s of motion but only "
            f"{motion.duration:.3f} s are available"
        )

    x_gt = motion.sample(timestamps)
    n, p = sampling.n_frames, motion.n_joints
    uv = np.full((n, p, 2), np.nan)
    valid = np.zeros((n, p), dtype=bool)
    w, h = rig.resolution
    for i in range(n):
        for j in range(p):
            try:
                px = project(cameras[i], x_gt[i, j])
            except BehindCameraError:
                continue
            if 0.0 <= px[0] <= w and 0.0 <= px[1] <= h:
                uv[i, j] = px
                valid[i, j] = True
    never = np.where(~valid.any(axis=0))[0]
    for j in never:
        warnings.warn(f"joint {j} never projects into any image", stacklevel=2)

    gt_order = np.argsort(timestamps, kind="stable")
    scene = Scene(n, p, cameras, uv, valid, streams=streams, global_order=gt_order)
    return SimulationResult(scene, x_gt, gt_order, timestamps)
