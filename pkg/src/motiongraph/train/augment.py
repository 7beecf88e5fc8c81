"""Scene augmentations for the shared-weight training variants.

Both augmentations keep the recoverable content of a scene intact. A
global rotation moves the world frame without touching a single pixel;
a camera perturbation moves the rig and re-renders the observations
from ground truth so the 2D evidence stays consistent.
"""

from __future__ import annotations

import numpy as np

from ..errors import BehindCameraError, DegenerateGeometryError
from ..geometry import Camera, Scene, TrajectoryMatrix, project, scene_scale


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation matrix drawn uniformly over SO(3) (normalized quaternion)."""
    w, x, y, z = rng.standard_normal(4)
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotate_structure(x, rotation: np.ndarray):
    """Apply a world rotation to a structure of any supported layout.

    Accepts a TrajectoryMatrix, an (N, P, 3) point block, or (N, 3P)
    stacked rows, and returns the same layout.
    """
    q = np.asarray(rotation, dtype=np.float64)
    if isinstance(x, TrajectoryMatrix):
        pts = x.points() @ q.T
        return TrajectoryMatrix(pts.reshape(x.n_frames, -1), x.mask.copy())
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 3:
        return arr @ q.T
    n, w = arr.shape
    return (arr.reshape(n, w // 3, 3) @ q.T).reshape(n, w)


def augment_global_rotation(scene: Scene, rng: np.random.Generator | None = None, rotation=None):
    """Rotate the world frame of a scene.

    Camera extrinsics absorb the rotation (R' = R Q^T, t' = t) so every
    projection is untouched; the observation arrays of the returned
    scene are the same values bit for bit. Returns ``(scene, rotation)``
    so callers can rotate ground truth and initializations to match via
    :func:`rotate_structure`.
    """
    if rotation is None:
        if rng is None:
            raise ValueError("provide either an rng or an explicit rotation")
        rotation = random_rotation(rng)
    q = np.asarray(rotation, dtype=np.float64)
    cams = [
        Camera(c.fx, c.fy, c.cx, c.cy, c.rotation @ q.T, c.translation.copy())
        for c in scene.cameras
    ]
    rotated = Scene(
        scene.n_frames,
        scene.n_joints,
        cams,
        scene.uv.copy(),
        scene.valid.copy(),
        streams=scene.streams,
        global_order=None if scene.global_order is None else scene.global_order.copy(),
    )
    return rotated, q


def _axis_angle(rng: np.random.Generator, max_angle: float) -> np.ndarray:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def augment_camera_perturb(
    scene: Scene,
    x_gt: np.ndarray,
    rng: np.random.Generator,
    theta_max_deg: float = 5.0,
    translation_fraction: float = 0.02,
    max_retries: int = 20,
) -> Scene:
    """Perturb each frame's camera and re-render observations from truth.

    Rotations are bounded by ``theta_max_deg`` and translations by
    ``translation_fraction`` of the scene scale. If a perturbed pose
    puts any observed joint behind the camera the frame's perturbation
    is redrawn, up to ``max_retries`` times before giving up. Zero
    magnitudes return the scene unchanged.

    ``x_gt`` is the (N, P, 3) ground-truth structure at the frame
    times; only joints valid in the input scene are re-rendered, the
    rest stay missing.
    """
    if theta_max_deg == 0.0 and translation_fraction == 0.0:
        return Scene(
            scene.n_frames,
            scene.n_joints,
            list(scene.cameras),
            scene.uv.copy(),
            scene.valid.copy(),
            streams=scene.streams,
            global_order=None if scene.global_order is None else scene.global_order.copy(),
        )
    pts = np.asarray(x_gt, dtype=np.float64).reshape(scene.n_frames, scene.n_joints, 3)
    scale = scene_scale(scene)
    max_angle = np.deg2rad(theta_max_deg)
    cams = []
    uv = np.full_like(scene.uv, np.nan)
    for i, cam in enumerate(scene.cameras):
        for attempt in range(max_retries + 1):
            rot = _axis_angle(rng, max_angle)
            step = rng.standard_normal(3)
            step *= translation_fraction * scale * rng.uniform() / np.linalg.norm(step)
            trial = Camera(cam.fx, cam.fy, cam.cx, cam.cy, rot @ cam.rotation, cam.translation + step)
            try:
                for j in np.where(scene.valid[i])[0]:
                    uv[i, j] = project(trial, pts[i, j])
            except BehindCameraError:
                continue
            cams.append(trial)
            break
        else:
            raise DegenerateGeometryError(
                f"frame {i}: no perturbed pose kept all joints in front "
                f"of the camera within {max_retries} retries"
            )
    return Scene(
        scene.n_frames,
        scene.n_joints,
        cams,
        uv,
        scene.valid.copy(),
        streams=scene.streams,
        global_order=None if scene.global_order is None else scene.global_order.copy(),
    )
