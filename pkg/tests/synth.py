"""Shared synthetic rigs and motions for the test suite.

Everything here is deliberately simple and self-contained so tests can
state exact expectations; the bench module has its own, richer simulator.
"""

import numpy as np

from motiongraph.geometry import Camera, Scene, Stream, project


def look_at_camera(position, target, f=1000.0, c=500.0):
    position = np.asarray(position, dtype=float)
    target = np.asarray(target, dtype=float)
    z = target - position
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(up, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.stack([x, y, z])
    return Camera(fx=f, fy=f, cx=c, cy=c, rotation=rot, translation=-rot @ position)


def ring_cameras(n_cams, distance=3.0, target=(0.0, 0.0, 0.0)):
    target = np.asarray(target, dtype=float)
    cams = []
    for k in range(n_cams):
        ang = 2 * np.pi * k / n_cams
        pos = target + distance * np.array([np.cos(ang), np.sin(ang), 0.05 * k])
        cams.append(look_at_camera(pos, target))
    return cams


def scene_from_points(points, n_cams=4, streams=False, global_order=False):
    """Scene whose frame n observes points[n] (P, 3) through camera
    ``n % n_cams`` of a ring rig."""
    points = np.asarray(points, dtype=float)
    n, p = points.shape[0], points.shape[1]
    ring = ring_cameras(n_cams)
    cams = [ring[i % n_cams] for i in range(n)]
    uv = np.zeros((n, p, 2))
    for f in range(n):
        for j in range(p):
            uv[f, j] = project(cams[f], points[f, j])
    stream_list = None
    if streams:
        stream_list = [
            Stream(c, [f for f in range(n) if f % n_cams == c]) for c in range(n_cams)
        ]
    order = np.arange(n) if global_order else None
    return Scene(n, p, cams, uv, np.ones((n, p), dtype=bool), stream_list, order)


def helix_points(n_frames, n_joints=2, radius=0.4, pitch=0.15, turns=1.0, seed=0):
    """Smooth helical motion with small per-joint offsets; (N, P, 3)."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, turns * 2 * np.pi, n_frames)
    base = np.stack([radius * np.cos(t), radius * np.sin(t), pitch * t / (2 * np.pi)], axis=1)
    offsets = 0.12 * rng.standard_normal((n_joints, 3))
    wobble = 0.03 * np.sin(t[:, None, None] * (1.0 + np.arange(n_joints))[None, :, None] + rng.uniform(0, 2 * np.pi, (1, n_joints, 1)))
    return base[:, None, :] + offsets[None, :, :] + wobble


def static_points(n_frames, n_joints=2, seed=0):
    rng = np.random.default_rng(seed)
    shape = 0.3 * rng.standard_normal((n_joints, 3))
    return np.repeat(shape[None], n_frames, axis=0)


def window_support(n, k):
    """Temporal window support: the k frames nearest in index."""
    from motiongraph.graphopt import SupportDomain

    neighbors = []
    for i in range(n):
        others = np.argsort(np.abs(np.arange(n) - i), kind="stable")
        others = others[others != i][:k]
        neighbors.append(np.sort(others))
    return SupportDomain(neighbors, k)
