"""Exception types shared across the package.

Every error raised on a user-facing path carries enough structure for the
CLI to serialize it as a machine-readable JSON object.
"""

from __future__ import annotations


class MotionGraphError(Exception):
    """Base class for all package errors."""

    def payload(self) -> dict:
        """Structured form used by the CLI error channel."""
        return {"error": type(self).__name__, "message": str(self)}


class BehindCameraError(MotionGraphError):
    """A 3D point has non-positive depth in the camera frame."""


class DegenerateGeometryError(MotionGraphError):
    """Ray pair too close to parallel for a stable triangulation."""


class RankDeficiencyError(MotionGraphError):
    """The structure solve is under-constrained for one or more joints."""

    def __init__(self, joints: list[int], message: str | None = None):
        self.joints = list(joints)
        if message is None:
            message = f"structure solve is rank deficient for joints {self.joints}"
        super().__init__(message)

    def payload(self) -> dict:
        out = super().payload()
        out["joints"] = self.joints
        return out


class EmptySupportError(MotionGraphError):
    """A frame ended up with no usable support neighbors."""

    def __init__(self, frames: list[int], message: str | None = None):
        self.frames = list(frames)
        if message is None:
            message = f"no support neighbors available for frames {self.frames}"
        super().__init__(message)

    def payload(self) -> dict:
        out = super().payload()
        out["frames"] = self.frames
        return out


class SchemaError(MotionGraphError):
    """An input file failed validation; lists offending field paths."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) if self.problems else "invalid input")

    def payload(self) -> dict:
        out = super().payload()
        out["problems"] = self.problems
        return out


class ClusterCountError(MotionGraphError):
    """Affinity structure cannot be reconciled with the requested target count."""

    def __init__(self, requested: int, spectrum: list[float]):
        self.requested = requested
        self.spectrum = [float(v) for v in spectrum]
        super().__init__(
            f"could not form {requested} non-empty clusters; "
            f"leading Laplacian eigenvalues {self.spectrum}"
        )

    def payload(self) -> dict:
        out = super().payload()
        out["requested"] = self.requested
        out["spectrum"] = self.spectrum
        return out


class TrainingDivergedError(MotionGraphError):
    """A loss became non-finite during training."""
