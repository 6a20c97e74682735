"""Small 3D math helpers: unit quaternions (w, x, y, z) and vectors.

Everything operates on plain tuples or numpy float64 arrays and is written
to be bit-reproducible: no reassociated reductions, no fused intrinsics.
"""

from __future__ import annotations

import math

import numpy as np

QUAT_IDENTITY = (1.0, 0.0, 0.0, 0.0)


def quat_normalize(q):
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        return QUAT_IDENTITY
    return (w / n, x / n, y / n, z / n)


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q):
    w, x, y, z = q
    return (w, -x, -y, -z)


def quat_rotate(q, v):
    """Rotate vector v (3-tuple) by unit quaternion q."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * cross(q.xyz, v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    # v' = v + w*t + cross(q.xyz, t)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_rotate_inv(q, v):
    return quat_rotate(quat_conj(q), v)


def quat_from_axis_angle(axis, angle: float):
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        return QUAT_IDENTITY
    h = 0.5 * angle
    s = math.sin(h) / n
    return (math.cos(h), ax * s, ay * s, az * s)


def quat_integrate(q, omega, dt: float):
    """Advance orientation q by angular velocity omega (world frame) over dt."""
    ox, oy, oz = omega
    mag = math.sqrt(ox * ox + oy * oy + oz * oz)
    if mag * dt < 1e-12:
        return quat_normalize(q)
    dq = quat_from_axis_angle((ox, oy, oz), mag * dt)
    # axis passed unnormalized is fine: quat_from_axis_angle normalizes
    return quat_normalize(quat_mul(dq, q))


def quat_to_matrix(q) -> np.ndarray:
    """3x3 rotation matrix (rows are world axes of the rotated frame basis)."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ],
        dtype=np.float64,
    )


def quat_norm_error(q) -> float:
    w, x, y, z = q
    return abs(math.sqrt(w * w + x * x + y * y + z * z) - 1.0)


def vec_add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vec_sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vec_scale(a, s: float):
    return (a[0] * s, a[1] * s, a[2] * s)


def vec_dot(a, b) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def vec_norm(a) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def vec_normalize(a):
    n = vec_norm(a)
    if n == 0.0:
        raise ValueError("cannot normalize zero-length vector")
    return (a[0] / n, a[1] / n, a[2] / n)
