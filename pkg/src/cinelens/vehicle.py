"""Kinematic vehicle state: rigid poses, keyframed flight paths, and the
fixed camera mount.

Orientation is a unit quaternion stored ``[w, x, y, z]``.  Positions are in
meters, world frame, +z up.  Pose playback interpolates positions linearly
and orientations along the shortest great-circle arc, clamping outside the
keyframe range.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyTrackError, ValidationError

_UNIT_NORM_TOL = 1e-9
IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)


def _as_vec(value, size: int, context: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (size,) or not np.all(np.isfinite(arr)):
        raise ValidationError(f"{context} must be a finite {size}-vector, got {value!r}")
    arr.flags.writeable = False
    return arr


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValidationError("cannot normalize a degenerate quaternion")
    out = q / norm
    out.flags.writeable = False
    return out


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector ``v`` by unit quaternion ``q``."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    xyz = q[1:]
    t = 2.0 * np.cross(xyz, v)
    return v + q[0] * t + np.cross(xyz, t)


def quat_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise ValidationError("rotation axis must be nonzero")
    half = 0.5 * angle_rad
    out = np.concatenate(([math.cos(half)], math.sin(half) * axis / norm))
    out.flags.writeable = False
    return out


def quat_slerp(q0, q1, u: float) -> np.ndarray:
    """Shortest-arc spherical interpolation; exact copies at the endpoints."""
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    if u <= 0.0:
        return q0.copy()
    if u >= 1.0:
        return q1.copy()
    dot = float(q0 @ q1)
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 0.9995:
        # Nearly parallel: linear blend, renormalized.
        return quat_normalize(q0 + u * (q1 - q0))
    theta = math.acos(min(dot, 1.0))
    sin_theta = math.sin(theta)
    w0 = math.sin((1.0 - u) * theta) / sin_theta
    w1 = math.sin(u * theta) / sin_theta
    return quat_normalize(w0 * q0 + w1 * q1)


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array(IDENTITY_QUAT))

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _as_vec(self.position, 3, "position"))
        q = _as_vec(self.orientation, 4, "orientation")
        if abs(float(np.linalg.norm(q)) - 1.0) > _UNIT_NORM_TOL:
            raise ValidationError("orientation quaternion must have unit norm")
        object.__setattr__(self, "orientation", quat_normalize(q))

    def approx_equal(self, other: "Pose", tol: float = 1e-12) -> bool:
        if not np.allclose(self.position, other.position, rtol=0.0, atol=tol):
            return False
        # q and -q encode the same rotation.
        q0, q1 = self.orientation, other.orientation
        return np.allclose(q0, q1, rtol=0.0, atol=tol) or np.allclose(
            q0, -q1, rtol=0.0, atol=tol
        )


@dataclass(frozen=True, eq=False)
class PoseKeyframe:
    t: float
    pose: Pose

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t) and self.t >= 0.0):
            raise ValidationError(f"keyframe time must be finite and >= 0, got {self.t!r}")


def _check_track(track: Sequence[PoseKeyframe]) -> None:
    if len(track) == 0:
        raise EmptyTrackError("pose track has no keyframes")
    times = [kf.t for kf in track]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError("pose keyframe times must be strictly increasing")


def interpolate_pose(track: Sequence[PoseKeyframe], t: float) -> Pose:
    """Pose at time ``t``: linear in position, slerp in orientation, clamped
    to the first/last keyframe outside the track range.  Exact at keyframes."""
    _check_track(track)
    times = [kf.t for kf in track]
    if t <= times[0]:
        return track[0].pose
    if t >= times[-1]:
        return track[-1].pose
    hi = bisect_right(times, t)
    lo = hi - 1
    if times[hi] == t:  # defensive; bisect_right puts exact matches below
        return track[hi].pose
    a, b = track[lo], track[hi]
    u = (t - a.t) / (b.t - a.t)
    if u == 0.0:
        return a.pose
    position = a.pose.position + u * (b.pose.position - a.pose.position)
    orientation = quat_slerp(a.pose.orientation, b.pose.orientation, u)
    return Pose(position=position, orientation=orientation)


@dataclass(frozen=True, eq=False)
class CameraMount:
    """Rigid transform from the vehicle body frame to the camera frame."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.array(IDENTITY_QUAT))

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "translation", _as_vec(self.translation, 3, "mount translation")
        )
        q = _as_vec(self.rotation, 4, "mount rotation")
        if abs(float(np.linalg.norm(q)) - 1.0) > _UNIT_NORM_TOL:
            raise ValidationError("mount rotation quaternion must have unit norm")
        object.__setattr__(self, "rotation", quat_normalize(q))


def camera_world_pose(vehicle_pose: Pose, mount: CameraMount) -> Pose:
    """Compose the vehicle pose with the mount transform (rigid composition)."""
    position = vehicle_pose.position + quat_rotate(
        vehicle_pose.orientation, mount.translation
    )
    orientation = quat_normalize(
        quat_multiply(vehicle_pose.orientation, mount.rotation)
    )
    return Pose(position=position, orientation=orientation)


def _field_of(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ValidationError(f"{context}: missing field {key!r}")
    return mapping[key]


def pose_from_dict(data: dict) -> Pose:
    unknown = set(data) - {"position", "orientation"}
    if unknown:
        raise ValidationError(f"pose: unknown fields {sorted(unknown)}")
    return Pose(
        position=_field_of(data, "position", "pose"),
        orientation=data.get("orientation", IDENTITY_QUAT),
    )


def keyframes_from_list(entries: Sequence[dict]) -> tuple[PoseKeyframe, ...]:
    track = []
    for entry in entries:
        unknown = set(entry) - {"t", "position", "orientation"}
        if unknown:
            raise ValidationError(f"pose keyframe: unknown fields {sorted(unknown)}")
        track.append(
            PoseKeyframe(
                t=float(_field_of(entry, "t", "pose keyframe")),
                pose=Pose(
                    position=_field_of(entry, "position", "pose keyframe"),
                    orientation=entry.get("orientation", IDENTITY_QUAT),
                ),
            )
        )
    result = tuple(track)
    _check_track(result)
    return result


def mount_from_dict(data: dict) -> CameraMount:
    unknown = set(data) - {"translation", "rotation"}
    if unknown:
        raise ValidationError(f"mount: unknown fields {sorted(unknown)}")
    return CameraMount(
        translation=data.get("translation", (0.0, 0.0, 0.0)),
        rotation=data.get("rotation", IDENTITY_QUAT),
    )
