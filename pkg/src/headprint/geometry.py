"""Rotations, frame conversion and equirectangular projection.

Axis convention, used everywhere in the package: a direction is an array
``(x, y, z)`` where ``x`` is the reference (filming / roll) direction and
``z`` is the vertical axis shared by the camera-based and VR frames.
Azimuth is measured in the x-y plane from ``+x`` towards ``+y``; altitude
is the elevation above that plane. Public angles are degrees.

Functions accept a single vector of shape ``(3,)`` or a stack ``(n, 3)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateOrientationError, InvalidArgumentError

VERTICAL_AXIS = np.array([0.0, 0.0, 1.0])

_POLE_EPS = 1e-12


class Frame(str, enum.Enum):
    CAMERA = "camera"
    VR = "vr"


@dataclass(frozen=True)
class Quaternion:
    w: float
    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2))

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        # Hamilton product; (self * other) applies ``other`` first.
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        q = Quaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )
        n = q.norm
        return Quaternion(q.w / n, q.x / n, q.y / n, q.z / n)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])


IDENTITY = Quaternion(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SphericalAngles:
    """Azimuth in [0, 360) and altitude in [-90, 90], degrees (scalars or arrays)."""

    azimuth_deg: float | np.ndarray
    altitude_deg: float | np.ndarray


@dataclass(frozen=True)
class EquirectPoint:
    w: float | np.ndarray
    h: float | np.ndarray


def make_quaternion(axis, degrees: float) -> Quaternion:
    """Unit quaternion rotating by ``degrees`` about ``axis`` (right-hand rule)."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if not np.isfinite(n) or n == 0.0:
        raise InvalidArgumentError("rotation axis must have nonzero length")
    ux, uy, uz = axis / n
    half = np.deg2rad(degrees) / 2.0
    s = np.sin(half)
    return Quaternion(float(np.cos(half)), float(ux * s), float(uy * s), float(uz * s))


def rotate_vector(q: Quaternion, v) -> np.ndarray:
    if abs(q.norm - 1.0) > 1e-6:
        raise InvalidArgumentError(f"quaternion is not unit (norm={q.norm!r})")
    v = np.asarray(v, dtype=float)
    u = np.array([q.x, q.y, q.z])
    # v' = v + 2w (u x v) + 2 u x (u x v)
    t = 2.0 * np.cross(u, v)
    return v + q.w * t + np.cross(u, t)


def yaw_rotate(v, degrees) -> np.ndarray:
    """Rotate about the vertical axis; ``degrees`` may be per-row for a stack."""
    v = np.asarray(v, dtype=float)
    deg = np.asarray(degrees, dtype=float)
    if deg.ndim == 0:
        return rotate_vector(make_quaternion(VERTICAL_AXIS, float(deg)), v)
    # per-sample angles: rotation about z is exact as a planar rotation
    rad = np.deg2rad(deg)
    c, s = np.cos(rad), np.sin(rad)
    out = v.copy()
    out[..., 0] = c * v[..., 0] - s * v[..., 1]
    out[..., 1] = s * v[..., 0] + c * v[..., 1]
    return out


def offset_angle(v1) -> float:
    """Signed angle of the horizontal projection of ``v1`` from ``+x``, in (-180, 180]."""
    x, y = float(v1[0]), float(v1[1])
    if np.hypot(x, y) <= _POLE_EPS:
        raise DegenerateOrientationError("first-frame orientation is vertical")
    a = float(np.degrees(np.arctan2(y, x)))
    return 180.0 if a == -180.0 else a


def camera_to_vr(v, a1: float) -> np.ndarray:
    return rotate_vector(make_quaternion(VERTICAL_AXIS, -a1), v)


def vr_to_camera(v, a1: float) -> np.ndarray:
    return rotate_vector(make_quaternion(VERTICAL_AXIS, a1), v)


def to_spherical(v) -> SphericalAngles:
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    horiz = np.hypot(x, y)
    alt = np.degrees(np.arctan2(z, horiz))
    az = np.mod(np.degrees(np.arctan2(y, x)), 360.0)
    # mod can return 360.0 for tiny negative inputs
    az = np.where(az >= 360.0, 0.0, az)
    az = np.where(horiz <= _POLE_EPS, 0.0, az)
    if v.ndim == 1:
        return SphericalAngles(float(az), float(alt))
    return SphericalAngles(az, alt)


def from_spherical(angles: SphericalAngles) -> np.ndarray:
    az = np.deg2rad(np.asarray(angles.azimuth_deg, dtype=float))
    alt = np.deg2rad(np.asarray(angles.altitude_deg, dtype=float))
    c = np.cos(alt)
    return np.stack([c * np.cos(az), c * np.sin(az), np.sin(alt)], axis=-1)


def equirect_project(angles: SphericalAngles, W: int, H: int) -> EquirectPoint:
    if W < 1 or H < 1:
        raise InvalidArgumentError(f"grid size must be positive, got {W}x{H}")
    az = np.asarray(angles.azimuth_deg, dtype=float)
    alt = np.asarray(angles.altitude_deg, dtype=float)
    w = az / 360.0 * W
    # az just below 360 can round up to W
    w = np.where(w >= W, w - W, w)
    h = (1.0 - np.sin(np.deg2rad(alt))) / 2.0 * H
    if w.ndim == 0:
        return EquirectPoint(float(w), float(h))
    return EquirectPoint(w, h)


def wrap_deg(a):
    """Wrap an angle difference into (-180, 180]."""
    r = -np.mod(-np.asarray(a, dtype=float) + 180.0, 360.0) + 180.0
    return float(r) if np.ndim(r) == 0 else r


def angular_distance_deg(u, v) -> np.ndarray:
    """Great-circle angle between unit vectors (broadcasting)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def slerp(u, v, t) -> np.ndarray:
    """Spherical linear interpolation between unit vectors ``u`` and ``v``.

    ``u`` and ``v`` are ``(n, 3)`` stacks and ``t`` has shape ``(n,)``.
    Near-antipodal pairs have no unique great circle; they fall back to
    normalized linear interpolation, which is still deterministic.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    dot = np.clip(np.sum(u * v, axis=-1, keepdims=True), -1.0, 1.0)
    omega = np.arccos(dot)
    so = np.sin(omega)
    small = so < 1e-9
    safe = np.where(small, 1.0, so)
    a = np.where(small, 1.0 - t, np.sin((1.0 - t) * omega) / safe)
    b = np.where(small, t, np.sin(t * omega) / safe)
    out = a * u + b * v
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def rotate_towards(u, v, max_deg: float) -> np.ndarray:
    """Move unit vector ``u`` towards ``v`` along the great circle by at most ``max_deg``."""
    u = np.asarray(u, dtype=float)
    d = float(angular_distance_deg(u, v))
    if d <= max_deg or d == 0.0:
        return np.asarray(v, dtype=float).copy()
    if d > 180.0 - 1e-6:
        # antipodal: every great circle works; turn horizontally unless at a pole
        axis = np.cross(u, VERTICAL_AXIS)
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(u, np.array([1.0, 0.0, 0.0]))
        return rotate_vector(make_quaternion(axis, -max_deg), u)
    return slerp(u, v, np.array([max_deg / d]))[0]
