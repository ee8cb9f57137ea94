"""Serial-chain arm kinematics and dynamics building blocks.

All functions accept joint vectors with arbitrary leading batch axes and
complex dtype, so exact derivatives of the inertia matrix come from one
batched complex-step evaluation instead of per-coordinate loops.  Positions
are expressed relative to the arm mount point; the mount frame is aligned
with the world frame (the platform carries no tilt in the control tier).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CSTEP_H, skew


def _cross3(a, b):
    """Broadcasting cross product without np.cross's axis bookkeeping."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape),
                   dtype=np.result_type(a, b))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


@dataclass
class ArmKin:
    """Forward kinematics of one (batch of) configuration(s)."""

    R: np.ndarray      # (..., m, 3, 3) world rotation of each link frame
    p: np.ndarray      # (..., m, 3) joint origins
    w: np.ndarray      # (..., m, 3) world joint axes
    c: np.ndarray      # (..., m, 3) link COM positions
    ee_p: np.ndarray   # (..., 3) end-effector point
    ee_R: np.ndarray   # (..., 3, 3) end-effector orientation


@dataclass
class ArmJac:
    Jv: np.ndarray     # (..., m, 3, m) link COM translational Jacobians
    Jw: np.ndarray     # (..., m, 3, m) link angular Jacobians
    Jv_ee: np.ndarray  # (..., 3, m)
    Jw_ee: np.ndarray  # (..., 3, m)


class SerialArm:
    def __init__(self, links, ee_offset):
        self.m = len(links)
        self.axes = np.array([l.axis for l in links])
        self.offsets = np.array([l.offset for l in links])
        self.masses = np.array([l.mass for l in links])
        self.coms = np.array([l.com for l in links])
        self.inertias = np.array([l.inertia for l in links])
        self.ee_offset = np.asarray(ee_offset, dtype=float)
        self.K = np.stack([skew(a) for a in self.axes])
        self.K2 = np.einsum("jab,jbc->jac", self.K, self.K)
        # strictly: column k of link j's Jacobian is active iff k <= j
        self._mask = np.tril(np.ones((self.m, self.m)))

    @property
    def mass(self):
        return float(self.masses.sum())

    # -- kinematics ------------------------------------------------------------

    def chain(self, qm):
        qm = np.asarray(qm)
        batch = qm.shape[:-1]
        eye3 = np.eye(3)
        R_prev = None
        p_prev = np.zeros(batch + (3,), dtype=qm.dtype)
        R, p, w, c = [], [], [], []
        for j in range(self.m):
            th = qm[..., j]
            s, co = np.sin(th), np.cos(th)
            R_loc = (
                eye3
                + s[..., None, None] * self.K[j]
                + (1.0 - co)[..., None, None] * self.K2[j]
            )
            if R_prev is None:
                p_j = p_prev + self.offsets[j]
                w_j = np.broadcast_to(self.axes[j], batch + (3,))
                R_j = R_loc
            else:
                p_j = p_prev + R_prev @ self.offsets[j]
                w_j = R_prev @ self.axes[j]
                R_j = R_prev @ R_loc
            c_j = p_j + R_j @ self.coms[j]
            R.append(R_j)
            p.append(p_j)
            w.append(w_j)
            c.append(c_j)
            R_prev, p_prev = R_j, p_j
        R = np.stack(R, axis=-3)
        p = np.stack(p, axis=-2)
        w = np.stack(w, axis=-2)
        c = np.stack(c, axis=-2)
        ee_p = p[..., -1, :] + R[..., -1, :, :] @ self.ee_offset
        return ArmKin(R=R, p=p, w=w, c=c, ee_p=ee_p, ee_R=R[..., -1, :, :])

    def jacobians(self, kin: ArmKin) -> ArmJac:
        # diff[j, k] = c_j - p_k; crossed[j, k] = w_k x (c_j - p_k)
        diff = kin.c[..., :, None, :] - kin.p[..., None, :, :]
        crossed = _cross3(kin.w[..., None, :, :], diff)
        crossed *= self._mask[..., :, :, None]
        Jv = np.swapaxes(crossed, -1, -2)
        Jw_full = np.broadcast_to(kin.w[..., None, :, :], diff.shape) * self._mask[..., :, :, None]
        Jw = np.swapaxes(Jw_full, -1, -2)
        diff_ee = kin.ee_p[..., None, :] - kin.p
        Jv_ee = np.swapaxes(_cross3(kin.w, diff_ee), -1, -2)
        Jw_ee = np.swapaxes(kin.w, -1, -2)
        return ArmJac(Jv=Jv, Jw=Jw, Jv_ee=Jv_ee, Jw_ee=Jw_ee)

    # -- dynamics terms ----------------------------------------------------------

    def mass_matrix(self, kin: ArmKin, jac: ArmJac, payload_mass=0.0):
        batch = jac.Jv.shape[:-3]
        # translational part: stack the mass-weighted link Jacobians over (j, axis)
        Wv = self.masses[:, None, None] * jac.Jv
        flat_w = Wv.reshape(batch + (3 * self.m, self.m))
        flat_j = jac.Jv.reshape(batch + (3 * self.m, self.m))
        M = np.swapaxes(flat_w, -1, -2) @ flat_j
        # rotational part with world-frame link inertias
        Iw = (kin.R @ self.inertias) @ np.swapaxes(kin.R, -1, -2)
        X = Iw @ jac.Jw
        M = M + np.swapaxes(jac.Jw.reshape(batch + (3 * self.m, self.m)), -1, -2) @ X.reshape(
            batch + (3 * self.m, self.m)
        )
        if payload_mass:
            M = M + payload_mass * np.swapaxes(jac.Jv_ee, -1, -2) @ jac.Jv_ee
        return M

    def coupling(self, jac: ArmJac, payload_mass=0.0):
        """Sum of mass-weighted COM Jacobians, the platform/arm inertia coupling."""
        Q = np.sum(self.masses[:, None, None] * jac.Jv, axis=-3)
        if payload_mass:
            Q = Q + payload_mass * jac.Jv_ee
        return Q

    def weighted_com(self, kin: ArmKin, payload_mass=0.0):
        """(total mass, mass-weighted COM position relative to the mount)."""
        total = self.mass + payload_mass
        s = np.einsum("j,...ja->...a", self.masses, kin.c)
        if payload_mass:
            s = s + payload_mass * kin.ee_p
        return total, s / total

    def gravity(self, jac: ArmJac, g, payload_mass=0.0):
        """Joint-space gravity vector for gravity g along -z (fixed base)."""
        return g * self.coupling(jac, payload_mass)[..., 2, :]

    def potential(self, kin: ArmKin, g, payload_mass=0.0):
        total, com = self.weighted_com(kin, payload_mass)
        return g * total * com[..., 2]

    def mass_and_partials(self, qm, payload_mass=0.0, h=CSTEP_H):
        """Inertia blocks and their exact joint-space partial derivatives.

        One batched complex-step evaluation: row 0 of the batch is the real
        configuration, row k+1 perturbs joint k.  Returns
        (kin, jac, M, dM, Q, dQ) where dM[k] = dM/dq_k, dQ[k] = dQ/dq_k and
        kin/jac are the real-configuration kinematics.
        """
        qm = np.asarray(qm, dtype=float)
        batch = np.repeat(qm[None, :].astype(complex), self.m + 1, axis=0)
        batch[1:] += 1j * h * np.eye(self.m)
        kin_b = self.chain(batch)
        jac_b = self.jacobians(kin_b)
        M_b = self.mass_matrix(kin_b, jac_b, payload_mass)
        Q_b = self.coupling(jac_b, payload_mass)
        M = np.real(M_b[0])
        dM = np.imag(M_b[1:]) / h
        Q = np.real(Q_b[0])
        dQ = np.imag(Q_b[1:]) / h
        kin = ArmKin(
            R=np.real(kin_b.R[0]),
            p=np.real(kin_b.p[0]),
            w=np.real(kin_b.w[0]),
            c=np.real(kin_b.c[0]),
            ee_p=np.real(kin_b.ee_p[0]),
            ee_R=np.real(kin_b.ee_R[0]),
        )
        jac = ArmJac(
            Jv=np.real(jac_b.Jv[0]),
            Jw=np.real(jac_b.Jw[0]),
            Jv_ee=np.real(jac_b.Jv_ee[0]),
            Jw_ee=np.real(jac_b.Jw_ee[0]),
        )
        return kin, jac, M, dM, Q, dQ
