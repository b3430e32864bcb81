"""Time, quaternion, pose and trajectory primitives.

Conventions:
    - Quaternions are Hamilton, stored (w, x, y, z).
    - A RigidTransform T maps points p_b -> p_a = R p_b + t.
    - compose(a, b) applies b first, then a.
    - Timestamps are float seconds from a per-session epoch.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import OutOfDomain

SLERP_LINEAR_ANGLE = 1e-6


@dataclass(frozen=True)
class UnitQuaternion:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def normalized(cls, w: float, x: float, y: float, z: float) -> "UnitQuaternion":
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        return cls(w / n, x / n, y / n, z / n)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> "UnitQuaternion":
        ax = np.asarray(axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        s = math.sin(angle / 2.0)
        return cls.normalized(math.cos(angle / 2.0), ax[0] * s, ax[1] * s, ax[2] * s)

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "UnitQuaternion":
        w, x, y, z = (float(v) for v in a[:4])
        # already-unit input is kept verbatim so serialized values round-trip bit-exact
        if abs(w * w + x * x + y * y + z * z - 1.0) <= 1e-12:
            return cls(w, x, y, z)
        return cls.normalized(w, x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def canonical(self) -> "UnitQuaternion":
        """Sign-flipped copy with w >= 0 (same rotation)."""
        if self.w < 0.0:
            return UnitQuaternion(-self.w, -self.x, -self.y, -self.z)
        return self

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        a, b = self, other
        return UnitQuaternion(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )

    def rotate(self, v: Sequence[float]) -> np.ndarray:
        return quat_rotate(self.as_array(), np.asarray(v, dtype=float))


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by unit quaternion(s) q; broadcasts over leading axes."""
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_angle(q0: UnitQuaternion, q1: UnitQuaternion) -> float:
    """Geodesic rotation angle (radians) between two orientations."""
    return float(quat_angle_array(q0.as_array(), q1.as_array()))


def quat_angle_array(q0: np.ndarray, q1: np.ndarray) -> np.ndarray:
    # atan2 form keeps precision for tiny angles, where acos(|dot|) does not
    conj = q0 * np.array([1.0, -1.0, -1.0, -1.0])
    d = quat_multiply(conj, q1)
    return 2.0 * np.arctan2(np.linalg.norm(d[..., 1:], axis=-1), np.abs(d[..., 0]))


def slerp(q0: UnitQuaternion, q1: UnitQuaternion, u: float) -> UnitQuaternion:
    """Shortest-arc spherical interpolation, u in [0, 1]."""
    out = slerp_array(q0.as_array(), q1.as_array(), np.asarray(u, dtype=float))
    return UnitQuaternion.from_array(out)


def slerp_array(q0: np.ndarray, q1: np.ndarray, u: np.ndarray) -> np.ndarray:
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    u = np.asarray(u, dtype=float)[..., None]
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0.0, -q1, q1)
    dot = np.abs(dot)
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    # half-angle between quaternions; rotation angle is 2*theta
    small = 2.0 * theta < SLERP_LINEAR_ANGLE
    sin_t = np.sin(theta)
    safe = np.where(small, 1.0, sin_t)
    a = np.where(small, 1.0 - u, np.sin((1.0 - u) * theta) / safe)
    b = np.where(small, u, np.sin(u * theta) / safe)
    out = a * q0 + b * q1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


@dataclass(frozen=True)
class RigidTransform:
    rotation: UnitQuaternion = UnitQuaternion()
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "RigidTransform":
        """From the 7-tuple ``qw qx qy qz tx ty tz``."""
        return cls(
            UnitQuaternion.from_array(a[:4]),
            (float(a[4]), float(a[5]), float(a[6])),
        )

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.rotation.as_array(), self.translation])

    def apply(self, p: Sequence[float]) -> np.ndarray:
        return self.rotation.rotate(p) + np.asarray(self.translation)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    t = a.rotation.rotate(b.translation) + np.asarray(a.translation)
    q = a.rotation * b.rotation
    return RigidTransform(UnitQuaternion.normalized(q.w, q.x, q.y, q.z), tuple(t.tolist()))


def invert(a: RigidTransform) -> RigidTransform:
    qi = a.rotation.conjugate()
    t = -qi.rotate(a.translation)
    return RigidTransform(qi, tuple(t.tolist()))


@dataclass(frozen=True)
class Pose6D:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: UnitQuaternion = UnitQuaternion()

    def as_transform(self) -> RigidTransform:
        return RigidTransform(self.orientation, self.position)

    @classmethod
    def from_transform(cls, t: RigidTransform) -> "Pose6D":
        return cls(t.translation, t.rotation)

    def as_array(self) -> np.ndarray:
        """``qw qx qy qz tx ty tz`` (the wire and container order)."""
        return np.concatenate([self.orientation.as_array(), self.position])

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "Pose6D":
        return cls.from_transform(RigidTransform.from_array(a))


@dataclass(frozen=True)
class PoseSample:
    t: float
    pose: Pose6D


class Trajectory1D:
    """Scalar samples on strictly increasing timestamps."""

    __slots__ = ("times", "values")

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        times = np.array(times, dtype=float)
        values = np.array(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValueError("trajectory contains non-finite entries")
        if times.size > 1 and np.any(np.diff(times) <= 0.0):
            raise ValueError("trajectory times must be strictly increasing")
        times.flags.writeable = False
        values.flags.writeable = False
        self.times = times
        self.values = values

    def __len__(self) -> int:
        return int(self.times.size)

    def __repr__(self) -> str:
        return f"Trajectory1D(n={len(self)}, span={self.span()})"

    def span(self) -> tuple[float, float]:
        if len(self) == 0:
            return (math.nan, math.nan)
        return (float(self.times[0]), float(self.times[-1]))

    def shifted(self, dt: float) -> "Trajectory1D":
        return Trajectory1D(self.times + dt, self.values)


def interp_linear(traj: Trajectory1D, t: float) -> float:
    """Piecewise-linear value at ``t``; raises OutOfDomain outside the span."""
    if len(traj) < 2:
        raise ValueError("interpolation needs at least two samples")
    t0, t1 = traj.span()
    if not (t0 <= t <= t1):
        raise OutOfDomain(f"t={t!r} outside [{t0!r}, {t1!r}]")
    return float(np.interp(t, traj.times, traj.values))


def interp_linear_many(traj: Trajectory1D, ts: np.ndarray) -> np.ndarray:
    """Vectorised interp_linear; out-of-span queries come back as NaN."""
    ts = np.asarray(ts, dtype=float)
    out = np.interp(ts, traj.times, traj.values)
    t0, t1 = traj.span()
    out[(ts < t0) | (ts > t1)] = np.nan
    return out


def interp_pose(track: Sequence[PoseSample], t: float) -> Pose6D:
    if len(track) < 2:
        raise ValueError("interpolation needs at least two samples")
    t0, t1 = track[0].t, track[-1].t
    if not (t0 <= t <= t1):
        raise OutOfDomain(f"t={t!r} outside [{t0!r}, {t1!r}]")
    i = bisect_right([s.t for s in track], t) - 1
    i = min(max(i, 0), len(track) - 2)
    a, b = track[i], track[i + 1]
    u = (t - a.t) / (b.t - a.t)
    if u == 0.0:
        return a.pose
    if u == 1.0:
        return b.pose
    pa = np.asarray(a.pose.position)
    pb = np.asarray(b.pose.position)
    pos = pa + u * (pb - pa)
    q = slerp(a.pose.orientation, b.pose.orientation, u)
    return Pose6D(tuple(pos.tolist()), q)


class PoseArrays:
    """Column form of a pose track: times (n,), quats (n, 4), positions (n, 3)."""

    def __init__(self, times: np.ndarray, quats: np.ndarray, positions: np.ndarray):
        self.times = np.asarray(times, dtype=float)
        self.quats = np.asarray(quats, dtype=float)
        self.positions = np.asarray(positions, dtype=float)

    @classmethod
    def from_samples(cls, track: Sequence[PoseSample]) -> "PoseArrays":
        times = np.array([s.t for s in track], dtype=float)
        arr = np.array([s.pose.as_array() for s in track], dtype=float).reshape(-1, 7)
        return cls(times, arr[:, :4], arr[:, 4:])

    def to_samples(self) -> list[PoseSample]:
        return [
            PoseSample(float(t), Pose6D(tuple(p.tolist()), UnitQuaternion(*q.tolist())))
            for t, q, p in zip(self.times, self.quats, self.positions)
        ]

    def __len__(self) -> int:
        return int(self.times.size)


def interp_poses(track: PoseArrays, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch interp_pose. Returns (quats (m, 4), positions (m, 3)).

    Every query must lie inside the track span; callers filter first.
    """
    ts = np.asarray(ts, dtype=float)
    if len(track) < 2:
        raise ValueError("interpolation needs at least two samples")
    if ts.size and (ts.min() < track.times[0] or ts.max() > track.times[-1]):
        raise OutOfDomain("query times outside the pose track span")
    i = np.searchsorted(track.times, ts, side="right") - 1
    i = np.clip(i, 0, len(track) - 2)
    ta, tb = track.times[i], track.times[i + 1]
    u = (ts - ta) / (tb - ta)
    pa, pb = track.positions[i], track.positions[i + 1]
    pos = pa + u[:, None] * (pb - pa)
    quats = slerp_array(track.quats[i], track.quats[i + 1], u)
    # knots are returned verbatim, matching interp_pose
    at_a = u == 0.0
    at_b = u == 1.0
    quats[at_a] = track.quats[i[at_a]]
    quats[at_b] = track.quats[i[at_b] + 1]
    pos[at_a] = pa[at_a]
    pos[at_b] = pb[at_b]
    return quats, pos


def compose_arrays(
    qa: np.ndarray, ta: np.ndarray, qb: np.ndarray, tb: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batch compose: (qa, ta) after (qb, tb)."""
    q = quat_multiply(qa, qb)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    t = quat_rotate(qa, tb) + ta
    return q, t
