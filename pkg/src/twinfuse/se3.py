"""Rotation and rigid-transform algebra on SO(3) / SE(3).

Twists are ordered (rho, phi): translation-like part first, rotation part
last. Angles are radians. Every coefficient function has a Taylor branch
for small angles so nothing divides by zero; the exp/log pair switches at
1e-8, the quartic/quintic Jacobian coefficients switch earlier because
they lose precision to cancellation sooner.
"""

from __future__ import annotations

import numpy as np

_EXP_LOG_EPS = 1e-8
_SERIES_EPS = 1e-4


def hat(v):
    """3-vector -> skew-symmetric matrix such that hat(a) @ b = a x b."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m):
    """Inverse of hat for (anti-symmetrized) 3x3 matrices."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _sinc(theta):
    # sin(t)/t
    if theta < _SERIES_EPS:
        t2 = theta * theta
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0
    return np.sin(theta) / theta


def _cosc(theta):
    # (1 - cos(t)) / t^2
    if theta < _SERIES_EPS:
        t2 = theta * theta
        return 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    return (1.0 - np.cos(theta)) / (theta * theta)


def _tsc(theta):
    # (t - sin(t)) / t^3
    if theta < _SERIES_EPS:
        t2 = theta * theta
        return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    return (theta - np.sin(theta)) / theta**3


def so3_exp(w):
    """Rodrigues formula: rotation vector -> rotation matrix."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    k = hat(w)
    return np.eye(3) + _sinc(theta) * k + _cosc(theta) * (k @ k)


def so3_log(r):
    """Rotation matrix -> rotation vector. Stable near 0 and pi."""
    tr = np.trace(r)
    cos_theta = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < _EXP_LOG_EPS:
        return vee(r - r.T) / 2.0
    if theta > np.pi - 1e-6:
        # Axis from the dominant diagonal of (R + I)/2; sign from skew part.
        b = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(b), 0.0))
        k = int(np.argmax(axis))
        axis = b[:, k] / max(axis[k], 1e-300)
        axis = axis / np.linalg.norm(axis)
        s = vee(r - r.T)
        if np.dot(s, axis) < 0.0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * vee(r - r.T)


def so3_left_jacobian(w):
    theta = np.linalg.norm(w)
    k = hat(w)
    return np.eye(3) + _cosc(theta) * k + _tsc(theta) * (k @ k)


def so3_left_jacobian_inv(w):
    theta = np.linalg.norm(w)
    k = hat(w)
    if theta < _SERIES_EPS:
        t2 = theta * theta
        coeff = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        coeff = 1.0 / (theta * theta) - (1.0 + np.cos(theta)) / (
            2.0 * theta * np.sin(theta)
        )
    return np.eye(3) - 0.5 * k + coeff * (k @ k)


def _q_matrix(rho, phi):
    """Off-diagonal block of the SE(3) left Jacobian (Barfoot-style)."""
    theta = np.linalg.norm(phi)
    rx = hat(rho)
    px = hat(phi)
    if theta < _SERIES_EPS:
        t2 = theta * theta
        c1 = 1.0 / 6.0 - t2 / 120.0
        m2 = -1.0 / 24.0 + t2 / 720.0
        m3 = -1.0 / 120.0 + t2 / 5040.0
    else:
        c1 = (theta - np.sin(theta)) / theta**3
        m2 = (1.0 - theta * theta / 2.0 - np.cos(theta)) / theta**4
        m3 = (theta - np.sin(theta) - theta**3 / 6.0) / theta**5
    pxrx = px @ rx
    rxpx = rx @ px
    pxpx = px @ px
    q = 0.5 * rx
    q += c1 * (pxrx + rxpx + px @ rx @ px)
    q -= m2 * (pxpx @ rx + rx @ pxpx - 3.0 * px @ rx @ px)
    q -= 0.5 * (m2 - 3.0 * m3) * (pxrx @ pxpx + pxpx @ rxpx)
    return q


def se3_exp(xi):
    """Twist (rho, phi) -> (R, t)."""
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[:3], xi[3:]
    r = so3_exp(phi)
    t = so3_left_jacobian(phi) @ rho
    return r, t


def se3_log(r, t):
    """(R, t) -> twist (rho, phi). Inverse of se3_exp."""
    phi = so3_log(r)
    rho = so3_left_jacobian_inv(phi) @ t
    return np.concatenate([rho, phi])


def se3_left_jacobian(xi):
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[:3], xi[3:]
    jl = so3_left_jacobian(phi)
    out = np.zeros((6, 6))
    out[:3, :3] = jl
    out[3:, 3:] = jl
    out[:3, 3:] = _q_matrix(rho, phi)
    return out


def se3_left_jacobian_inv(xi):
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[:3], xi[3:]
    jli = so3_left_jacobian_inv(phi)
    out = np.zeros((6, 6))
    out[:3, :3] = jli
    out[3:, 3:] = jli
    out[:3, 3:] = -jli @ _q_matrix(rho, phi) @ jli
    return out


def se3_right_jacobian_inv(xi):
    # Jr(xi) = Jl(-xi), hence Jr^-1(xi) = Jl^-1(-xi).
    return se3_left_jacobian_inv(-np.asarray(xi, dtype=float))


def adjoint(r, t):
    """SE(3) adjoint in (rho, phi) ordering."""
    out = np.zeros((6, 6))
    out[:3, :3] = r
    out[:3, 3:] = hat(t) @ r
    out[3:, 3:] = r
    return out


def nearest_rotation(m):
    """Project a near-rotation onto SO(3) (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def quat_from_matrix(r):
    """Rotation matrix -> unit quaternion (w, x, y, z)."""
    tr = np.trace(r)
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        return np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s,
             (r[1, 0] - r[0, 1]) / s]
        )
    i = int(np.argmax(np.diag(r)))
    if i == 0:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s,
             (r[0, 2] + r[2, 0]) / s]
    elif i == 1:
        s = np.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2]) * 2.0
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s,
             (r[1, 2] + r[2, 1]) / s]
    else:
        s = np.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2]) * 2.0
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s,
             (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    return np.array(q)


def matrix_from_quat(q):
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def slerp(r0, r1, alpha):
    """Geodesic interpolation between two rotation matrices."""
    q0 = quat_from_matrix(r0)
    q1 = quat_from_matrix(r1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1, dot = -q1, -dot
    dot = min(dot, 1.0)
    if dot > 1.0 - 1e-12:
        q = (1.0 - alpha) * q0 + alpha * q1
    else:
        omega = np.arccos(dot)
        q = (
            np.sin((1.0 - alpha) * omega) * q0 + np.sin(alpha * omega) * q1
        ) / np.sin(omega)
    return matrix_from_quat(q)


def random_rotation(rng, max_angle=None):
    """Uniform random rotation; optionally capped to a maximum angle."""
    if max_angle is not None:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        return so3_exp(axis * rng.uniform(0.0, max_angle))
    q = rng.normal(size=4)
    return matrix_from_quat(q)
