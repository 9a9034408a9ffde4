"""Rigid-body transforms and quaternion helpers.

Poses are 4x4 world-to-camera matrices (float64). Twists are 6-vectors
(rho, phi) with translation first. Quaternions are (w, x, y, z).
"""

import numpy as np


def hat(v):
    """Skew-symmetric matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_to_rotmat(q):
    """Rotation matrix of a (w, x, y, z) quaternion. Accepts (4,) or (N, 4)."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    if single:
        q = q[None]
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R[0] if single else R


def rotmat_to_quat(R):
    """Quaternion (w, x, y, z) of a rotation matrix, w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
            q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                          (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
        elif i == 1:
            s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
            q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                          0.25 * s, (R[1, 2] + R[2, 1]) / s])
        else:
            s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
            q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                          (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_multiply(a, b):
    """Hamilton product a * b of (w, x, y, z) quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([aw * bw - ax * bx - ay * by - az * bz,
                     aw * bx + ax * bw + ay * bz - az * by,
                     aw * by - ax * bz + ay * bw + az * bx,
                     aw * bz + ax * by - ay * bx + az * bw])


def random_quat(rng):
    """Uniformly distributed unit quaternion."""
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def se3_identity():
    return np.eye(4)


def make_se3(R, t):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def se3_compose(a, b):
    return a @ b


def se3_inverse(a):
    R = a[:3, :3]
    t = a[:3, 3]
    return make_se3(R.T, -R.T @ t)


def se3_act(T, points):
    """Apply T to points of shape (3,) or (N, 3)."""
    points = np.asarray(points, dtype=np.float64)
    return points @ T[:3, :3].T + T[:3, 3]


def so3_exp(phi):
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1 - np.cos(theta)) / theta ** 2
    return np.eye(3) + a * K + b * (K @ K)


def se3_exp(xi):
    """Exponential map of a twist (rho, phi) to a 4x4 transform."""
    xi = np.asarray(xi, dtype=np.float64)
    rho, phi = xi[:3], xi[3:]
    theta = np.linalg.norm(phi)
    K = hat(phi)
    KK = K @ K
    if theta < 1e-8:
        R = np.eye(3) + K + 0.5 * KK
        V = np.eye(3) + 0.5 * K + KK / 6.0
    else:
        a = np.sin(theta) / theta
        b = (1 - np.cos(theta)) / theta ** 2
        c = (theta - np.sin(theta)) / theta ** 3
        R = np.eye(3) + a * K + b * KK
        V = np.eye(3) + b * K + c * KK
    return make_se3(R, V @ rho)


def so3_log(R):
    """Rotation vector of R, stable for all angles below pi."""
    q = rotmat_to_quat(R)
    w = q[0]
    v = q[1:]
    n = np.linalg.norm(v)
    if n < 1e-12:
        return 2.0 * v  # small angle: phi ~ 2*v/w with w ~ 1
    angle = 2.0 * np.arctan2(n, w)
    return (angle / n) * v


def se3_log(T):
    """Logarithm map of a 4x4 transform to a twist (rho, phi)."""
    phi = so3_log(T[:3, :3])
    theta = np.linalg.norm(phi)
    K = hat(phi)
    KK = K @ K
    if theta < 1e-8:
        Vinv = np.eye(3) - 0.5 * K + KK / 12.0
    else:
        half = 0.5 * theta
        coef = (1.0 - half * np.cos(half) / np.sin(half)) / theta ** 2
        Vinv = np.eye(3) - 0.5 * K + coef * KK
    rho = Vinv @ T[:3, 3]
    return np.concatenate([rho, phi])


def is_rotation(R, tol=1e-6):
    R = np.asarray(R)
    return (np.allclose(R @ R.T, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < tol)
