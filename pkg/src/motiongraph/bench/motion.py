"""Motion sources: parametric articulated generators and a mocap loader.

A motion is a function from time to a joint set. The parametric
generators exist so the whole test suite runs with zero external data;
they all keep the subject within roughly a meter of the origin, where
the default rig looks. Mocap files are CSV rows of
``time,joint,x,y,z`` on a complete time grid and are interpolated with
a cubic spline.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import parse_qsl

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import SchemaError


@dataclass
class Motion:
    """Joint trajectories over a time domain.

    ``sample`` maps an array of absolute times to (T, P, 3) joint
    positions; ``domain`` is the closed time interval on which sampling
    is defined (parametric motions are unbounded).
    """

    n_joints: int
    domain: tuple
    _fn: callable = field(repr=False)

    def sample(self, times) -> np.ndarray:
        t = np.atleast_1d(np.asarray(times, dtype=np.float64))
        lo, hi = self.domain
        if t.size and (t.min() < lo - 1e-9 or t.max() > hi + 1e-9):
            raise ValueError(
                f"requested times span [{t.min():.6g}, {t.max():.6g}] but the "
                f"motion is defined on [{lo:.6g}, {hi:.6g}]"
            )
        out = self._fn(t)
        return out.reshape(t.size, self.n_joints, 3)

    @property
    def duration(self) -> float:
        return self.domain[1] - self.domain[0]


def _joint_rig(rng: np.random.Generator, joints: int, limb: float):
    """Shared per-joint decoration: fixed offsets plus one sinusoid each."""
    offsets = rng.normal(scale=limb, size=(joints, 3))
    amp = rng.uniform(0.2 * limb, 0.5 * limb, size=joints)
    freq = rng.uniform(0.3, 1.0, size=joints)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=joints)
    direction = rng.normal(size=(joints, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)

    def wobble(t: np.ndarray) -> np.ndarray:
        s = amp[None, :] * np.sin(2.0 * np.pi * freq[None, :] * t[:, None] + phase[None, :])
        return offsets[None, :, :] + s[:, :, None] * direction[None, :, :]

    return wobble


def _helix(joints=8, radius=0.5, rev_s=0.25, pitch=0.3, seed=0, limb=0.12, tempo=1.0):
    rng = np.random.default_rng(int(seed))
    wobble = _joint_rig(rng, int(joints), limb)
    omega = 2.0 * np.pi * rev_s

    def fn(t):
        ts = tempo * t
        base = np.stack(
            [radius * np.cos(omega * ts), radius * np.sin(omega * ts), pitch * np.sin(0.43 * omega * ts)],
            axis=1,
        )
        return base[:, None, :] + wobble(ts)

    return Motion(int(joints), (-math.inf, math.inf), fn)


def _articulated(joints=8, extent=0.8, duration=10.0, waypoints=8, seed=0, limb=0.15, tempo=1.0):
    rng = np.random.default_rng(int(seed))
    times = np.linspace(0.0, float(duration), int(waypoints))
    path = rng.uniform(-extent / 2.0, extent / 2.0, size=(int(waypoints), 3))
    base = CubicSpline(times, path, bc_type="natural")
    wobble = _joint_rig(rng, int(joints), limb)

    def fn(t):
        ts = tempo * (t - times[0]) + times[0]
        return base(ts)[:, None, :] + wobble(ts)

    return Motion(int(joints), (0.0, float(duration) / float(tempo) if tempo > 0 else float(duration)), fn)


def _static(joints=8, extent=0.5, seed=0):
    rng = np.random.default_rng(int(seed))
    shape = rng.uniform(-extent / 2.0, extent / 2.0, size=(int(joints), 3))

    def fn(t):
        return np.broadcast_to(shape, (t.size, int(joints), 3)).copy()

    return Motion(int(joints), (-math.inf, math.inf), fn)


def _line(joints=2, speed=0.5, seed=0, limb=0.1):
    rng = np.random.default_rng(int(seed))
    offsets = rng.normal(scale=limb, size=(int(joints), 3))
    axis = np.array([1.0, 0.0, 0.0])

    def fn(t):
        return (speed * t)[:, None, None] * axis[None, None, :] + offsets[None, :, :]

    return Motion(int(joints), (-math.inf, math.inf), fn)


_PRESETS = {
    "helix": _helix,
    "articulated": _articulated,
    "static": _static,
    "line": _line,
}


def make_motion(preset: str, **params) -> Motion:
    if preset not in _PRESETS:
        raise SchemaError([f"unknown motion preset {preset!r}, expected one of {sorted(_PRESETS)}"])
    try:
        return _PRESETS[preset](**params)
    except TypeError as exc:
        raise SchemaError([f"motion preset {preset!r}: {exc}"]) from None


def motion_from_spec(spec: str) -> Motion:
    """Resolve a motion source string.

    ``gen:<preset>?key=val&...`` builds a parametric generator; anything
    else is read as a mocap CSV path.
    """
    if spec.startswith("gen:"):
        name, _, query = spec[4:].partition("?")
        params = {}
        for key, raw in parse_qsl(query, keep_blank_values=True):
            try:
                params[key] = int(raw)
            except ValueError:
                try:
                    params[key] = float(raw)
                except ValueError:
                    raise SchemaError([f"motion spec parameter {key}={raw!r} is not numeric"]) from None
        return make_motion(name, **params)
    return load_mocap_csv(spec)


def load_mocap_csv(path) -> Motion:
    """Load joint trajectories from ``time,joint,x,y,z`` rows.

    Every joint must be present at every listed time; at least four
    distinct times are needed for cubic interpolation.
    """
    path = Path(path)
    entries: dict[tuple, np.ndarray] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:5]] != ["time", "joint", "x", "y", "z"]:
            raise SchemaError([f"{path}: expected header time,joint,x,y,z"])
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, j = float(row[0]), int(row[1])
                xyz = np.array([float(row[2]), float(row[3]), float(row[4])])
            except (ValueError, IndexError):
                raise SchemaError([f"{path}:{lineno}: malformed row {row!r}"]) from None
            if (t, j) in entries:
                raise SchemaError([f"{path}:{lineno}: duplicate sample (t={t}, joint {j})"])
            entries[(t, j)] = xyz
    if not entries:
        raise SchemaError([f"{path}: no samples"])
    times = np.array(sorted({t for t, _ in entries}))
    joints = sorted({j for _, j in entries})
    if joints != list(range(len(joints))):
        raise SchemaError([f"{path}: joint ids must be contiguous from 0, got {joints}"])
    if times.size < 4:
        raise SchemaError([f"{path}: cubic interpolation needs at least 4 times, got {times.size}"])
    grid = np.empty((times.size, len(joints), 3))
    missing = []
    for ti, t in enumerate(times):
        for j in joints:
            key = (float(t), j)
            if key not in entries:
                missing.append(f"(t={t}, joint {j})")
                continue
            grid[ti, j] = entries[key]
    if missing:
        raise SchemaError([f"{path}: incomplete time grid, missing {m}" for m in missing[:5]])
    spline = CubicSpline(times, grid, axis=0, bc_type="natural")
    return Motion(len(joints), (float(times[0]), float(times[-1])), spline)
