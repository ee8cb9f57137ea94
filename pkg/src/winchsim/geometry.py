"""Geometric and numerical helpers shared across the package.

Everything on the hot paths is written to stay valid under complex-step
differentiation: no conjugating norms, no abs(), no atan2.  Derivatives of
analytic expressions are obtained as Im(f(x + ih v))/h with h far below
roundoff, which is exact to machine precision.
"""

from __future__ import annotations

import numpy as np

CSTEP_H = 1e-100


def vdot(a, b):
    """Unconjugated dot product along the last axis (complex-step safe)."""
    return np.sum(a * b, axis=-1)


def vnorm(v):
    """sqrt(v . v) without conjugation; np.linalg.norm would take |.| first."""
    return np.sqrt(vdot(v, v))


def unit(v):
    return v / vnorm(v)


# -- planar rotations ---------------------------------------------------------

def rot2(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def drot2(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[-s, -c], [c, -s]])


def perp2(v):
    """Rotate a planar vector by +90 deg; equals d/dtheta [R(theta) u] at Ru = v."""
    out = np.empty(v.shape, dtype=v.dtype)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


# -- spatial rotations / quaternions ------------------------------------------

def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def quat_mult(a, b):
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


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q):
    return q / np.sqrt(np.sum(q * q))


def quat_to_mat(q):
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def mat_to_quat(R):
    """Rotation matrix to unit quaternion [w, x, y, z] (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def orientation_error(q_cur, q_des):
    """World-frame orientation error vector.

    Twice the vector part of q_cur * q_des^-1 (sign-normalized), which is the
    rotation vector taking the desired frame onto the current one to first
    order.  A restoring torque is -K times this vector.
    """
    qe = quat_mult(quat_normalize(q_cur), quat_conj(quat_normalize(q_des)))
    if qe[0] < 0:
        qe = -qe
    return 2.0 * qe[1:]


# -- differentiation helpers ---------------------------------------------------

def cstep_directional(f, x, v, h=CSTEP_H):
    """d/dt f(x + t v) at t=0 by complex step; f must be analytic in x."""
    return np.imag(f(np.asarray(x) + 1j * h * np.asarray(v))) / h


def cstep_jacobian(f, x, h=CSTEP_H):
    """Jacobian of f (vector valued) w.r.t. x, one complex evaluation per column."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        xc = x.astype(complex)
        xc[k] += 1j * h
        cols.append(np.imag(f(xc)) / h)
    return np.stack(cols, axis=-1)


def spd_sqrt(A):
    """Symmetric square root of a symmetric PSD matrix via eigendecomposition."""
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
