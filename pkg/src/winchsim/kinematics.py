"""Control-tier kinematics: end-effector and COM maps, task Jacobians,
and the cable inverse kinematics.

The control tier describes the platform by its translation x_p relative to
the hook (the cable suspension point), with the platform orientation held
level: the cable-length commands are always chosen to null roll and pitch,
so the platform rotation matrix is the identity throughout.  gamma stacks
x_p with the arm joint angles.
"""

from __future__ import annotations

import numpy as np

from .arm import SerialArm
from .errors import CableRangeError
from .geometry import mat_to_quat


class ControlKinematics:
    """Forward kinematics and task Jacobians on gamma = [x_p, q_m]."""

    def __init__(self, params):
        self.p = params
        self.arm = SerialArm(params.arm_links, params.ee_offset)
        self.n = 3 + params.n_arm
        # third arm joint: the elbow damping task selects its rate
        self.elbow_index = 3 + 2

    def fk_end_effector(self, gamma):
        """End-effector pose (position, unit quaternion) in the hook frame."""
        gamma = np.asarray(gamma, dtype=float)
        kin = self.arm.chain(gamma[3:])
        pos = gamma[:3] + self.p.arm_mount + kin.ee_p
        return pos, mat_to_quat(kin.ee_R)

    def fk_com(self, gamma, payload_mass=0.0):
        """System COM (platform + arm + payload) relative to the hook."""
        gamma = np.asarray(gamma, dtype=float)
        kin = self.arm.chain(gamma[3:])
        m_below, com_arm = self.arm.weighted_com(kin, payload_mass)
        m_sys = self.p.platform_mass + m_below
        return gamma[:3] + (m_below / m_sys) * (self.p.arm_mount + com_arm)

    def task_jacobians(self, gamma, payload_mass=0.0):
        """(J1 6xn, J2 3xn, J3 1xn): end-effector twist, COM velocity, elbow rate.

        The platform block of J2 is exactly the identity: the COM translates
        one-to-one with the platform.
        """
        gamma = np.asarray(gamma, dtype=float)
        kin = self.arm.chain(gamma[3:])
        jac = self.arm.jacobians(kin)
        m = self.p.n_arm
        J1 = np.zeros((6, self.n))
        J1[:3, :3] = np.eye(3)
        J1[:3, 3:] = jac.Jv_ee
        J1[3:, 3:] = jac.Jw_ee
        J2 = np.zeros((3, self.n))
        J2[:, :3] = np.eye(3)
        m_sys = self.p.platform_mass + self.arm.mass + payload_mass
        J2[:, 3:] = self.arm.coupling(jac, payload_mass) / m_sys
        J3 = np.zeros((1, self.n))
        J3[0, self.elbow_index] = 1.0
        return J1, J2, J3

    def singularity_measure(self, gamma):
        """sigma_min/sigma_max of the end-effector Jacobian arm block."""
        gamma = np.asarray(gamma, dtype=float)
        kin = self.arm.chain(gamma[3:])
        jac = self.arm.jacobians(kin)
        J = np.vstack([jac.Jv_ee, jac.Jw_ee])
        s = np.linalg.svd(J, compute_uv=False)
        return float(s[-1] / s[0])


# -- rigging cable kinematics ---------------------------------------------------

def cable_lengths(x_p, params):
    """Lengths of the three cables for platform position x_p at zero tilt.

    Each cable runs from the hook to its platform attachment, so with the
    platform level the cable vector is x_p + a_i.
    """
    x_p = np.asarray(x_p, dtype=float)
    return np.linalg.norm(x_p[None, :] + params.cable_attach, axis=1)


def cable_ik(x_p, params):
    """Cable lengths realizing x_p with zero platform roll/pitch.

    Raises CableRangeError naming every cable whose length falls outside the
    winch range; the bounds are inclusive.
    """
    l = cable_lengths(x_p, params)
    lo, hi = params.cable_length_min, params.cable_length_max
    bad = [(i + 1, float(l[i]), lo, hi) for i in range(3) if not (lo <= l[i] <= hi)]
    if bad:
        raise CableRangeError(bad)
    return l


_CABLE_FK_CACHE = {}


def _cable_fk_statics(params):
    key = id(params)
    hit = _CABLE_FK_CACHE.get(key)
    if hit is None:
        a = params.cable_attach
        D = 2.0 * (a[:2] - a[2])
        pinv = D.T @ np.linalg.inv(D @ D.T)
        nvec = np.cross(a[0] - a[2], a[1] - a[2])
        nvec = nvec / np.linalg.norm(nvec)
        offs = np.sum(a[:2] ** 2, axis=1) - np.sum(a[2] ** 2)
        hit = (pinv, nvec, offs)
        _CABLE_FK_CACHE[key] = hit
    return hit


def cable_fk(lengths, params):
    """Platform position from three cable lengths at zero tilt (closed form).

    Pairwise differences of the squared sphere equations ||x + a_i|| = l_i
    give two linear equations; the remaining quadratic picks the solution
    below the hook.  Raises ValueError when the lengths admit no zero-tilt
    intersection.
    """
    l = np.asarray(lengths, dtype=float)
    a = params.cable_attach
    pinv, nvec, offs = _cable_fk_statics(params)
    rhs = l[:2] ** 2 - l[2] ** 2 - offs
    # minimum-norm solution of the underdetermined 2x3 system
    x0 = pinv @ rhs
    w = x0 + a[2]
    b = nvec @ w
    c = w @ w - l[2] ** 2
    disc = b * b - c
    if disc < 0:
        raise ValueError("cable lengths admit no zero-tilt platform position")
    root = np.sqrt(disc)
    cands = [x0 + (-b - root) * nvec, x0 + (-b + root) * nvec]
    # platform hangs below the hook
    x = min(cands, key=lambda v: v[2])
    return x


def cable_fk_residual(x_p, lengths, params):
    """Per-cable closure error of a zero-tilt solution (diagnostic)."""
    return cable_lengths(x_p, params) - np.asarray(lengths, dtype=float)
