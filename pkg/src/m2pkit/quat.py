"""Quaternion helpers.

Quaternions are stored scalar-last, ``(qx, qy, qz, qw)``, as numpy arrays.
Every function accepts a single quaternion of shape ``(4,)`` or a stack of
shape ``(..., 4)``.

Euler angles follow the intrinsic Z-Y-X (yaw, pitch, roll) Tait-Bryan
convention and are expressed in degrees:

    R = Rz(yaw) @ Ry(pitch) @ Rx(roll)
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateQuaternionError, QuaternionError

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])

DEGENERATE_NORM = 1e-12
UNIT_TOL = 1e-6
SLERP_SMALL_ANGLE = 1e-7
GIMBAL_TOL_DEG = 1e-6


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (4,):
        raise QuaternionError(f"expected quaternion(s) with last dimension 4, got shape {q.shape}")
    return q


def _check_unit(q: np.ndarray, what: str = "quaternion") -> None:
    norms = np.linalg.norm(q, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= UNIT_TOL):
        raise QuaternionError(f"{what} is not unit-norm (|q| = {np.max(np.abs(norms - 1.0)) + 1:.9g})")


def normalize(q) -> np.ndarray:
    q = _as_quat(q)
    norms = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(~np.isfinite(norms)) or np.any(norms <= DEGENERATE_NORM):
        raise DegenerateQuaternionError("cannot normalize a zero-length or non-finite quaternion")
    return q / norms


def from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle_rad
    return np.concatenate([axis * np.sin(half), [np.cos(half)]])


def angle_between(q0, q1) -> np.ndarray:
    """Rotation angle in radians taking ``q0`` to ``q1`` (sign-invariant).

    Uses the chord formulation, which stays accurate for tiny angles where
    ``arccos`` of the dot product loses precision.
    """
    q0 = _as_quat(q0)
    q1 = _as_quat(q1)
    q1 = np.where((np.sum(q0 * q1, axis=-1) < 0.0)[..., None], -q1, q1)
    diff = np.linalg.norm(q0 - q1, axis=-1)
    summ = np.linalg.norm(q0 + q1, axis=-1)
    return 4.0 * np.arctan2(diff, summ)


def slerp(q0, q1, u) -> np.ndarray:
    """Spherical linear interpolation along the shorter arc.

    ``u`` may be a scalar or an array broadcastable against the leading
    dimensions of the quaternions.
    """
    q0 = _as_quat(q0)
    q1 = _as_quat(q1)
    u = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(u)) or np.any(u < 0.0) or np.any(u > 1.0):
        raise QuaternionError("interpolation parameter must lie in [0, 1]")
    _check_unit(q0, "q0")
    _check_unit(q1, "q1")

    dot = np.sum(q0 * q1, axis=-1)
    q1 = np.where((dot < 0.0)[..., None], -q1, q1)
    # half of the rotation angle, i.e. the arc on the 4-sphere
    theta = 2.0 * np.arctan2(np.linalg.norm(q0 - q1, axis=-1), np.linalg.norm(q0 + q1, axis=-1))
    theta, u = np.broadcast_arrays(theta, u)
    small = theta < SLERP_SMALL_ANGLE

    sin_theta = np.sin(np.where(small, 1.0, theta))
    w0 = np.where(small, 1.0 - u, np.sin((1.0 - u) * theta) / sin_theta)
    w1 = np.where(small, u, np.sin(u * theta) / sin_theta)
    out = w0[..., None] * q0 + w1[..., None] * q1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def align_hemisphere(series) -> np.ndarray:
    """Flip signs so consecutive quaternions have a non-negative dot product.

    The first element is never changed.
    """
    q = np.array(series, dtype=float)
    if q.ndim != 2 or q.shape[1] != 4:
        raise QuaternionError(f"expected an (n, 4) quaternion series, got shape {q.shape}")
    for i in range(1, len(q)):
        if np.dot(q[i - 1], q[i]) < 0.0:
            q[i] = -q[i]
    return q


def to_euler(q) -> np.ndarray:
    """Return ``(yaw, pitch, roll)`` in degrees along the last axis.

    yaw and roll lie in (-180, 180], pitch in [-90, 90]. Within
    ``GIMBAL_TOL_DEG`` of +/-90 degrees pitch, roll is pinned to zero and
    yaw carries the remaining free rotation.
    """
    q = _as_quat(q)
    _check_unit(q)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    x, y, z, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]

    r00 = 1.0 - 2.0 * (y * y + z * z)
    r10 = 2.0 * (x * y + w * z)
    r20 = 2.0 * (x * z - w * y)
    r21 = 2.0 * (y * z + w * x)
    r22 = 1.0 - 2.0 * (x * x + y * y)
    r01 = 2.0 * (x * y - w * z)
    r11 = 1.0 - 2.0 * (x * x + z * z)

    pitch = np.degrees(np.arctan2(-r20, np.hypot(r21, r22)))
    yaw = np.degrees(np.arctan2(r10, r00))
    roll = np.degrees(np.arctan2(r21, r22))

    locked = np.abs(np.abs(pitch) - 90.0) <= GIMBAL_TOL_DEG
    if np.any(locked):
        yaw = np.where(locked, np.degrees(np.arctan2(-r01, r11)), yaw)
        roll = np.where(locked, 0.0, roll)
        pitch = np.where(locked, np.copysign(90.0, pitch), pitch)

    yaw = np.where(yaw <= -180.0, yaw + 360.0, yaw)
    roll = np.where(roll <= -180.0, roll + 360.0, roll)
    return np.stack([yaw, pitch, roll], axis=-1)


def from_euler(angles) -> np.ndarray:
    """Inverse of :func:`to_euler`; ``angles`` is ``(..., 3)`` degrees."""
    a = np.radians(np.asarray(angles, dtype=float))
    hy, hp, hr = 0.5 * a[..., 0], 0.5 * a[..., 1], 0.5 * a[..., 2]
    cy, sy = np.cos(hy), np.sin(hy)
    cp, sp = np.cos(hp), np.sin(hp)
    cr, sr = np.cos(hr), np.sin(hr)
    x = sr * cp * cy - cr * sp * sy
    y = cr * sp * cy + sr * cp * sy
    z = cr * cp * sy - sr * sp * cy
    w = cr * cp * cy + sr * sp * sy
    return np.stack([x, y, z, w], axis=-1)


def wrap_degrees(delta) -> np.ndarray:
    """Wrap angle differences into (-180, 180]."""
    d = np.mod(np.asarray(delta, dtype=float) + 180.0, 360.0) - 180.0
    return np.where(d <= -180.0, d + 360.0, d)
