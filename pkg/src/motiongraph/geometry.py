"""Cameras, rays, scenes and pseudo-triangulation.

Conventions
-----------
* World-to-camera map: ``x_cam = R @ x_world + t``. The camera center in
  world coordinates is ``-R.T @ t``.
* Pixel coordinates follow (u, v) with u along the image x axis.
* A scene holds one camera pose per frame (each frame is a single image;
  a physical camera that produced several frames simply repeats its pose).
* Trajectory matrices are (N, 3P) float64 with row layout
  ``[x_0 y_0 z_0 x_1 y_1 z_1 ...]`` and an (N, P) boolean mask that flags
  entries whose initialization is considered reliable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BehindCameraError, DegenerateGeometryError, SchemaError

_ORTHO_TOL = 1e-8


@dataclass
class Camera:
    """Pinhole camera with known intrinsics and pose.

    Parameters
    ----------
    fx, fy : float
        Focal lengths in pixels, strictly positive.
    cx, cy : float
        Principal point in pixels.
    rotation : (3, 3) ndarray
        World-to-camera rotation, orthonormal with determinant +1.
    translation : (3,) ndarray
        World-to-camera translation.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise SchemaError([f"camera focal lengths must be positive, got ({self.fx}, {self.fy})"])
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > _ORTHO_TOL or abs(np.linalg.det(self.rotation) - 1.0) > _ORTHO_TOL:
            raise SchemaError(["camera rotation is not a proper rotation matrix"])

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class Ray:
    """A world-space ray with unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    @staticmethod
    def through(origin, direction) -> "Ray":
        origin = np.asarray(origin, dtype=np.float64).reshape(3)
        direction = np.asarray(direction, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(direction)
        if norm < 1e-300:
            raise SchemaError(["ray direction must be nonzero"])
        return Ray(origin, direction / norm)


@dataclass(frozen=True)
class Observation:
    """A single 2D measurement of one joint in one frame."""

    frame: int
    joint: int
    pixel: tuple[float, float]
    valid: bool = True


@dataclass
class Stream:
    """Per-camera sequencing prior: frame ids in within-stream capture order."""

    id: int
    frame_order: list[int]


@dataclass
class Scene:
    """A set of frames with known per-frame cameras and 2D observations.

    Observations are stored densely: ``uv[n, p]`` holds the pixel of joint
    ``p`` in frame ``n`` and ``valid[n, p]`` says whether that measurement
    exists. Each (frame, joint) pair appears at most once by construction.
    ``streams`` and ``global_order`` are optional sequencing priors; absent
    priors mean the frames carry no ordering information at all.
    """

    n_frames: int
    n_joints: int
    cameras: list[Camera]
    uv: np.ndarray
    valid: np.ndarray
    streams: list[Stream] | None = None
    global_order: np.ndarray | None = None

    def __post_init__(self):
        self.uv = np.asarray(self.uv, dtype=np.float64).reshape(self.n_frames, self.n_joints, 2)
        self.valid = np.asarray(self.valid, dtype=bool).reshape(self.n_frames, self.n_joints)
        problems = []
        if len(self.cameras) != self.n_frames:
            problems.append(f"expected {self.n_frames} cameras, got {len(self.cameras)}")
        if self.global_order is not None:
            self.global_order = np.asarray(self.global_order, dtype=np.int64)
            if sorted(self.global_order.tolist()) != list(range(self.n_frames)):
                problems.append("global_order is not a permutation of the frame indices")
        if self.streams is not None:
            seen: set[int] = set()
            for s in self.streams:
                for f in s.frame_order:
                    if f in seen:
                        problems.append(f"frame {f} appears in more than one stream")
                    if not (0 <= f < self.n_frames):
                        problems.append(f"stream {s.id} references unknown frame {f}")
                    seen.add(f)
        if problems:
            raise SchemaError(problems)

    @classmethod
    def from_observations(
        cls,
        n_frames: int,
        n_joints: int,
        cameras: list[Camera],
        observations: list[Observation],
        streams: list[Stream] | None = None,
        global_order=None,
    ) -> "Scene":
        uv = np.full((n_frames, n_joints, 2), np.nan)
        valid = np.zeros((n_frames, n_joints), dtype=bool)
        for obs in observations:
            if not (0 <= obs.frame < n_frames and 0 <= obs.joint < n_joints):
                raise SchemaError([f"observation ({obs.frame}, {obs.joint}) out of range"])
            if valid[obs.frame, obs.joint]:
                raise SchemaError([f"duplicate observation for frame {obs.frame}, joint {obs.joint}"])
            if obs.valid:
                uv[obs.frame, obs.joint] = obs.pixel
                valid[obs.frame, obs.joint] = True
        return cls(n_frames, n_joints, cameras, uv, valid, streams, global_order)

    def observations(self) -> list[Observation]:
        out = []
        for n in range(self.n_frames):
            for p in range(self.n_joints):
                if self.valid[n, p]:
                    out.append(Observation(n, p, (float(self.uv[n, p, 0]), float(self.uv[n, p, 1]))))
        return out

    def camera_centers(self) -> np.ndarray:
        return np.stack([cam.center for cam in self.cameras])

    def copy(self) -> "Scene":
        return Scene(
            self.n_frames,
            self.n_joints,
            [replace(c, rotation=c.rotation.copy(), translation=c.translation.copy()) for c in self.cameras],
            self.uv.copy(),
            self.valid.copy(),
            None if self.streams is None else [Stream(s.id, list(s.frame_order)) for s in self.streams],
            None if self.global_order is None else self.global_order.copy(),
        )


@dataclass
class TrajectoryMatrix:
    """Per-frame stacked joint coordinates plus a reliability mask."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        n, w = self.data.shape
        if w % 3 != 0:
            raise SchemaError([f"trajectory matrix width {w} is not a multiple of 3"])
        if self.mask.shape != (n, w // 3):
            raise SchemaError([f"mask shape {self.mask.shape} does not match data {self.data.shape}"])

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_joints(self) -> int:
        return self.data.shape[1] // 3

    def points(self) -> np.ndarray:
        """View as (N, P, 3)."""
        return self.data.reshape(self.n_frames, self.n_joints, 3)

    @classmethod
    def from_points(cls, pts: np.ndarray, mask=None) -> "TrajectoryMatrix":
        pts = np.asarray(pts, dtype=np.float64)
        n, p, _ = pts.shape
        if mask is None:
            mask = np.ones((n, p), dtype=bool)
        return cls(pts.reshape(n, 3 * p), mask)


@dataclass
class PartnerPolicy:
    """Controls partner-frame search during pseudo-triangulation.

    ``window`` restricts candidate partners to frames within that many
    positions in the global order when one is available; with no order
    (or ``window=None``) the search is exhaustive. Pairs whose viewing
    rays converge at less than ``min_angle_deg`` are discarded, and an
    initialized entry is masked when its best partner score exceeds
    ``max_score_fraction`` of the scene scale.
    """

    window: int | None = 10
    min_angle_deg: float = 2.0
    max_score_fraction: float = 0.05


def project(camera: Camera, point) -> np.ndarray:
    """Project a world point to pixel coordinates.

    Raises
    ------
    BehindCameraError
        If the point has non-positive depth in the camera frame.
    """
    p = np.asarray(point, dtype=np.float64).reshape(3)
    pc = camera.rotation @ p + camera.translation
    if pc[2] <= 0:
        raise BehindCameraError(f"point {p.tolist()} has depth {pc[2]:.6g}")
    return np.array([camera.fx * pc[0] / pc[2] + camera.cx, camera.fy * pc[1] / pc[2] + camera.cy])


def backproject(camera: Camera, pixel) -> Ray:
    """Ray from the camera center through a pixel, unit direction."""
    u, v = np.asarray(pixel, dtype=np.float64).reshape(2)
    d_cam = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    return Ray.through(camera.center, camera.rotation.T @ d_cam)


def point_to_ray_sq(point, ray: Ray) -> float:
    """Squared distance from a point to the line carrying ``ray``.

    Using the full line keeps the expression quadratic in the point,
    which the structure solver relies on.
    """
    w = np.asarray(point, dtype=np.float64).reshape(3) - ray.origin
    along = w @ ray.direction
    # Cancellation can push the result a few ulp below zero.
    return max(float(w @ w - along * along), 0.0)


def triangulate_rays(ray_a: Ray, ray_b: Ray, min_angle: float = 1e-8):
    """Midpoint triangulation of two rays.

    Returns
    -------
    point : (3,) ndarray
        Midpoint of the common perpendicular segment; minimizes the sum
        of squared distances to the two lines.
    residual : float
        Closest-approach distance between the lines.
    angle : float
        Acute angle (radians) between the two lines.

    Raises
    ------
    DegenerateGeometryError
        If the line angle falls below ``min_angle`` radians.
    """
    d1, d2 = ray_a.direction, ray_b.direction
    b = float(d1 @ d2)
    angle = float(np.arccos(min(abs(b), 1.0)))
    if angle < min_angle:
        raise DegenerateGeometryError(f"rays are near parallel (angle {angle:.3e} rad)")
    w0 = ray_a.origin - ray_b.origin
    denom = 1.0 - b * b
    s = (b * (d2 @ w0) - (d1 @ w0)) / denom
    t = ((d2 @ w0) - b * (d1 @ w0)) / denom
    p1 = ray_a.origin + s * d1
    p2 = ray_b.origin + t * d2
    return 0.5 * (p1 + p2), float(np.linalg.norm(p1 - p2)), angle


def scene_scale(scene: Scene) -> float:
    """Characteristic metric scale: the rig diameter (max camera-center
    distance), falling back to 1.0 for degenerate rigs."""
    centers = scene.camera_centers()
    diffs = centers[:, None, :] - centers[None, :, :]
    diameter = float(np.sqrt((diffs**2).sum(-1)).max())
    return diameter if diameter > 1e-12 else 1.0


def _ray_grid(scene: Scene):
    """Dense per-(frame, joint) ray origins and unit directions.

    Origins are per frame (camera centers); directions are NaN where the
    observation is missing.
    """
    n, p = scene.n_frames, scene.n_joints
    origins = scene.camera_centers()
    dirs = np.full((n, p, 3), np.nan)
    for f, cam in enumerate(scene.cameras):
        cols = np.where(scene.valid[f])[0]
        if cols.size == 0:
            continue
        uv = scene.uv[f, cols]
        d_cam = np.stack(
            [(uv[:, 0] - cam.cx) / cam.fx, (uv[:, 1] - cam.cy) / cam.fy, np.ones(cols.size)],
            axis=1,
        )
        d_world = d_cam @ cam.rotation
        dirs[f, cols] = d_world / np.linalg.norm(d_world, axis=1, keepdims=True)
    return origins, dirs


def _pair_scores(origins, dirs, min_angle_rad):
    """Vectorized midpoint triangulation over all frame pairs of one joint.

    origins, dirs: (F, 3) arrays for the F frames observing the joint.
    Returns (midpoints (F, F, 3), scores (F, F)) where score is the
    closest-approach residual divided by tan(line angle); excluded pairs
    (self, near-parallel, closest approach behind either camera) carry
    +inf.
    """
    f = origins.shape[0]
    b = dirs @ dirs.T
    cos_line = np.clip(np.abs(b), 0.0, 1.0)
    angle = np.arccos(cos_line)
    w0 = origins[:, None, :] - origins[None, :, :]
    d1w = np.einsum("ik,ijk->ij", dirs, w0)
    d2w = np.einsum("jk,ijk->ij", dirs, w0)
    denom = 1.0 - b * b
    bad = (angle < min_angle_rad) | np.eye(f, dtype=bool)
    safe = np.where(bad, 1.0, denom)
    s = (b * d2w - d1w) / safe
    t = (d2w - b * d1w) / safe
    # Rays leaving two frames of the same physical camera meet exactly at
    # the shared center (zero residual, healthy angle), which would win
    # every argmin. Requiring positive depth along both rays rejects that
    # and any other crossing behind a camera.
    bad |= (s <= 0.0) | (t <= 0.0)
    p1 = origins[:, None, :] + s[:, :, None] * dirs[:, None, :]
    p2 = origins[None, :, :] + t[:, :, None] * dirs[None, :, :]
    residual = np.linalg.norm(p1 - p2, axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = residual / np.tan(angle)
    score[bad] = np.inf
    return 0.5 * (p1 + p2), score


def pseudo_triangulate(scene: Scene, policy: PartnerPolicy | None = None) -> TrajectoryMatrix:
    """Initialize 3D structure by pairing each observation with its best
    partner frame.

    For every valid (frame, joint) observation the partner frame is the
    one minimizing ``residual / tan(angle)`` over candidate frames that
    also observe the joint; larger convergence angles are preferred at
    equal residual. Entries with no acceptable partner are filled with
    their frame's barycenter of triangulated joints and masked.
    """
    if policy is None:
        policy = PartnerPolicy()
    n, p = scene.n_frames, scene.n_joints
    origins, dirs = _ray_grid(scene)
    min_angle_rad = np.deg2rad(policy.min_angle_deg)
    max_score = policy.max_score_fraction * scene_scale(scene)

    order_pos = None
    if policy.window is not None and scene.global_order is not None:
        order_pos = np.empty(n, dtype=np.int64)
        order_pos[scene.global_order] = np.arange(n)

    pts = np.zeros((n, p, 3))
    mask = np.zeros((n, p), dtype=bool)
    for joint in range(p):
        frames = np.where(scene.valid[:, joint])[0]
        if frames.size < 2:
            continue
        mids, scores = _pair_scores(origins[frames], dirs[frames, joint], min_angle_rad)
        if order_pos is not None:
            gap = np.abs(order_pos[frames][:, None] - order_pos[frames][None, :])
            scores = np.where(gap <= policy.window, scores, np.inf)
        best = np.argmin(scores, axis=1)
        rows = np.arange(frames.size)
        best_scores = scores[rows, best]
        ok = best_scores <= max_score
        mask[frames[ok], joint] = True
        pts[frames[ok], joint] = mids[rows[ok], best[ok]]

    # Fill unreliable entries with the frame barycenter of triangulated
    # joints (global barycenter if the whole frame failed) so downstream
    # consumers always see finite coordinates.
    if mask.any():
        global_bary = pts[mask].mean(axis=0)
    else:
        warnings.warn("pseudo-triangulation produced no reliable entries", stacklevel=2)
        global_bary = np.zeros(3)
    for frame in range(n):
        holes = ~mask[frame]
        if not holes.any():
            continue
        good = mask[frame]
        fill = pts[frame, good].mean(axis=0) if good.any() else global_bary
        pts[frame, holes] = fill
    return TrajectoryMatrix.from_points(pts, mask)


def reprojection_residuals(x: TrajectoryMatrix, scene: Scene) -> np.ndarray:
    """Per-observation pixel residuals (N, P), NaN where no observation,
    +inf where the estimate sits behind the camera."""
    out = np.full((scene.n_frames, scene.n_joints), np.nan)
    pts = x.points()
    for frame, cam in enumerate(scene.cameras):
        for joint in np.where(scene.valid[frame])[0]:
            try:
                uv = project(cam, pts[frame, joint])
            except BehindCameraError:
                out[frame, joint] = np.inf
                continue
            out[frame, joint] = np.linalg.norm(uv - scene.uv[frame, joint])
    return out


def relabel_frames(scene: Scene, perm) -> Scene:
    """Relabel frame indices: new frame ``i`` is old frame ``perm[i]``.

    Sequencing priors are rewritten consistently.
    """
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(scene.n_frames)):
        raise SchemaError(["relabeling is not a permutation of the frame indices"])
    inv = np.empty_like(perm)
    inv[perm] = np.arange(scene.n_frames)
    streams = None
    if scene.streams is not None:
        streams = [Stream(s.id, [int(inv[f]) for f in s.frame_order]) for s in scene.streams]
    global_order = None
    if scene.global_order is not None:
        global_order = inv[scene.global_order]
    return Scene(
        scene.n_frames,
        scene.n_joints,
        [scene.cameras[f] for f in perm],
        scene.uv[perm],
        scene.valid[perm],
        streams,
        global_order,
    )
