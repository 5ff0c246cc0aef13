"""Quaternion and homogeneous-transform utilities.

Quaternions are ``(w, x, y, z)`` arrays. Roll-pitch-yaw follows the URDF
convention: fixed-axis XYZ, i.e. ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""
import numpy as np
from scipy.spatial.transform import Rotation

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q)
    if norm < 1e-12:
        raise ValueError("zero-norm quaternion")
    return q / norm


def quat_canonical(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return -q if q[0] < 0 else q


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
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_branch(R) -> int:
    """Index of the conversion branch for a rotation matrix.

    0 is the trace branch, 1..3 the diagonal-element branches. The branch with
    the largest radicand is selected; the differentiable conversion uses the
    same rule.
    """
    r00, r11, r22 = R[0, 0], R[1, 1], R[2, 2]
    radicands = (
        1.0 + r00 + r11 + r22,
        1.0 + r00 - r11 - r22,
        1.0 - r00 + r11 - r22,
        1.0 - r00 - r11 + r22,
    )
    return int(np.argmax(radicands))


def matrix_to_quat(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    branch = quat_branch(R)
    if branch == 0:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] + R[1, 1] + R[2, 2])
        q = [s / 4, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif branch == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, s / 4, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif branch == 2:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, s / 4, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, s / 4]
    return quat_canonical(quat_normalize(q))


def quat_log(q) -> np.ndarray:
    """Rotation vector (axis * angle) of a unit quaternion, shortest arc."""
    q = quat_canonical(quat_normalize(q))
    v = q[1:]
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v
    return 2.0 * np.arctan2(s, q[0]) * v / s


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rpy_to_quat(rpy) -> np.ndarray:
    x, y, z, w = Rotation.from_euler("xyz", rpy).as_quat()
    return quat_canonical(np.array([w, x, y, z]))


def quat_to_rpy(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return Rotation.from_quat([x, y, z, w]).as_euler("xyz")


def make_transform(R=None, p=None) -> np.ndarray:
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if p is not None:
        T[:3, 3] = p
    return T
