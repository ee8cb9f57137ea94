"""Control-tier dynamics: reduced terms on gamma, the coupled
admittance/manipulator plant, and fixed-step integrators.

The reduced model treats the platform as a translating rigid body (the
winch commands null its tilt and the pendulum joint dynamics are neglected)
carrying the serial arm.  Gravity enters two ways:

* the platform translation rows carry the linearized pendulum restoring
  force (m_sys g / l1) [x_com, y_com, 0]: the crane carries the total
  weight, and a horizontal COM offset produces the corresponding restoring
  generalized force about the suspension point;
* the arm rows carry the full fixed-base arm gravity vector.

This split mirrors the neglected pendulum dynamics and is a modeling choice,
not an identity; the two pieces are validated against separate potentials.

The Coriolis matrix is built from Christoffel symbols of the inertia matrix
(dM/dq by complex step), so dM/dt - 2C is skew-symmetric to machine
precision.  An external-wrench input channel is reserved (tau_ext) but no
estimator feeds it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .geometry import mat_to_quat, rk4_step
from .kinematics import ControlKinematics


@dataclass
class ModelEval:
    """Dynamics terms and task kinematics at one state (gamma, gammadot)."""

    gamma: np.ndarray
    gammadot: np.ndarray
    payload: float
    M: np.ndarray        # (n, n) inertia
    C: np.ndarray        # (n, n) Coriolis/centrifugal (Christoffel)
    g: np.ndarray        # (n,) gravity/restoring vector
    dM: np.ndarray       # (m, n, n) dM/dq_m (platform partials vanish)
    com: np.ndarray      # (3,) system COM
    v_arm: float         # arm+payload gravity potential (mount frame)
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray
    ee_pos: np.ndarray
    ee_quat: np.ndarray

    @property
    def n(self):
        return self.M.shape[0]

    # Eq.-level blocks of the coupled platform/arm system
    @property
    def M_m(self):
        return self.M[3:, 3:]

    @property
    def M_pm(self):
        return self.M[3:, :3]

    @property
    def C_m(self):
        return self.C[3:, 3:]

    @property
    def C_pm(self):
        return self.C[3:, :3]

    @property
    def g_m(self):
        return self.g[3:]


class ReducedModel:
    """Reduced dynamics on gamma = [x_p, q_m] for a given parameter set."""

    def __init__(self, params):
        self.p = params
        self.kin = ControlKinematics(params)
        self.arm = self.kin.arm
        self.n = 3 + params.n_arm

    def pendulum_stiffness(self, payload_mass=0.0):
        return self.p.suspended_mass(payload_mass) * self.p.gravity / self.p.l1

    def eval(self, gamma, gammadot, payload_mass=0.0) -> ModelEval:
        gamma = np.asarray(gamma, dtype=float)
        gammadot = np.asarray(gammadot, dtype=float)
        m = self.p.n_arm
        n = self.n
        kin, jac, M_arm, dM_arm, Q, dQ = self.arm.mass_and_partials(gamma[3:], payload_mass)
        m_sys = self.p.platform_mass + self.arm.mass + payload_mass

        M = np.zeros((n, n))
        M[:3, :3] = m_sys * np.eye(3)
        M[:3, 3:] = Q
        M[3:, :3] = Q.T
        M[3:, 3:] = M_arm

        dM = np.zeros((m, n, n))
        dM[:, :3, 3:] = dQ
        dM[:, 3:, :3] = np.swapaxes(dQ, -1, -2)
        dM[:, 3:, 3:] = dM_arm

        C = _christoffel(dM, gammadot)

        m_below = self.arm.mass + payload_mass
        weighted = self.arm.masses @ kin.c + payload_mass * kin.ee_p
        com_arm = weighted / max(m_below, 1e-300)
        com = gamma[:3] + (m_below / m_sys) * (self.p.arm_mount + com_arm)
        v_arm = self.p.gravity * weighted[2]
        g = np.zeros(n)
        k_pend = self.pendulum_stiffness(payload_mass)
        g[0] = k_pend * com[0]
        g[1] = k_pend * com[1]
        g[3:] = self.p.gravity * Q[2, :]

        J1 = np.zeros((6, n))
        J1[:3, :3] = np.eye(3)
        J1[:3, 3:] = jac.Jv_ee
        J1[3:, 3:] = jac.Jw_ee
        J2 = np.zeros((3, n))
        J2[:, :3] = np.eye(3)
        J2[:, 3:] = Q / m_sys
        J3 = np.zeros((1, n))
        J3[0, self.kin.elbow_index] = 1.0

        return ModelEval(
            gamma=gamma, gammadot=gammadot, payload=payload_mass,
            M=M, C=C, g=g, dM=dM, com=com, v_arm=float(v_arm), J1=J1, J2=J2, J3=J3,
            ee_pos=gamma[:3] + self.p.arm_mount + kin.ee_p,
            ee_quat=mat_to_quat(kin.ee_R),
        )

    def kinematic_terms(self, gamma, payload_mass=0.0):
        """(M, J1, J2, J3) at gamma, complex-safe (no Christoffel work).

        Used to differentiate the extended task Jacobian by complex step.
        """
        gamma = np.asarray(gamma)
        n = self.n
        kin = self.arm.chain(gamma[3:])
        jac = self.arm.jacobians(kin)
        M_arm = self.arm.mass_matrix(kin, jac, payload_mass)
        Q = self.arm.coupling(jac, payload_mass)
        m_sys = self.p.platform_mass + self.arm.mass + payload_mass
        M = np.zeros((n, n), dtype=gamma.dtype)
        M[:3, :3] = m_sys * np.eye(3)
        M[:3, 3:] = Q
        M[3:, :3] = Q.T
        M[3:, 3:] = M_arm
        J1 = np.zeros((6, n), dtype=gamma.dtype)
        J1[:3, :3] = np.eye(3)
        J1[:3, 3:] = jac.Jv_ee
        J1[3:, 3:] = jac.Jw_ee
        J2 = np.zeros((3, n), dtype=gamma.dtype)
        J2[:, :3] = np.eye(3)
        J2[:, 3:] = Q / m_sys
        J3 = np.zeros((1, n), dtype=gamma.dtype)
        J3[0, self.kin.elbow_index] = 1.0
        return M, J1, J2, J3

    # -- energies (diagnostics and oracles) ---------------------------------------

    def kinetic(self, ev: ModelEval):
        return 0.5 * ev.gammadot @ ev.M @ ev.gammadot

    def potential(self, gamma, payload_mass=0.0):
        """Arm gravity potential plus the linearized pendulum restoring potential."""
        gamma = np.asarray(gamma, dtype=float)
        kin = self.arm.chain(gamma[3:])
        v_arm = self.arm.potential(kin, self.p.gravity, payload_mass)
        com = self.kin.fk_com(gamma, payload_mass)
        k = self.pendulum_stiffness(payload_mass)
        return float(v_arm + 0.5 * k * (com[0] ** 2 + com[1] ** 2))

    # -- equations of motion -------------------------------------------------------

    def energy(self, ev: ModelEval):
        """T + V at an evaluated state (V: arm gravity + pendulum restoring)."""
        k = self.pendulum_stiffness(ev.payload)
        return float(
            self.kinetic(ev) + ev.v_arm + 0.5 * k * (ev.com[0] ** 2 + ev.com[1] ** 2)
        )

    def reduced_accel(self, ev: ModelEval, tau_gamma):
        return np.linalg.solve(ev.M, tau_gamma - ev.C @ ev.gammadot - ev.g)

    def coupled_accel(self, ev: ModelEval, tau_p, tau_m, adm, xp_dot, qm_dot):
        """Accelerations of the coupled admittance/manipulator system.

        Platform rows follow the virtual admittance dynamics only (the upper
        off-diagonal block is zero: arm motion feeds no reaction back into
        the admittance).  The manipulator rows keep the inertia and Coriolis
        couplings from the reduced model.
        """
        xp_ddot = np.linalg.solve(adm.M, tau_p - adm.D @ xp_dot)
        rhs = tau_m - ev.C_pm @ xp_dot - ev.C_m @ qm_dot - ev.g_m - ev.M_pm @ xp_ddot
        qm_ddot = np.linalg.solve(ev.M_m, rhs)
        return xp_ddot, qm_ddot

    # -- integrators ---------------------------------------------------------------

    def integrate_reduced(self, gamma0, gammadot0, torque_fn, dt, duration,
                          payload_mass=0.0, state_bound=1e3):
        """Fixed-step RK4 on the monolithic reduced dynamics.

        torque_fn(t, ev) -> tau_gamma is evaluated inside every stage, so
        feedback laws are integrated as continuous controllers.  Returns
        (t, gamma, gammadot, energy) arrays.
        """
        nsteps = int(round(duration / dt)) if duration > 0 else 0
        n = self.n

        def f(t, y):
            ev = self.eval(y[:n], y[n:], payload_mass)
            acc = self.reduced_accel(ev, torque_fn(t, ev))
            return np.concatenate([y[n:], acc])

        t_grid = np.arange(nsteps + 1) * dt
        gam = np.empty((nsteps + 1, n))
        gad = np.empty((nsteps + 1, n))
        E = np.empty(nsteps + 1)
        y = np.concatenate([np.asarray(gamma0, float), np.asarray(gammadot0, float)])
        for i in range(nsteps + 1):
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > state_bound:
                raise DivergenceError(i * dt, "reduced state out of bounds")
            gam[i], gad[i] = y[:n], y[n:]
            ev = self.eval(y[:n], y[n:], payload_mass)
            E[i] = self.energy(ev)
            if i < nsteps:
                y = rk4_step(f, i * dt, y, dt)
        return t_grid, gam, gad, E

    def integrate_coupled(self, xp0, xpdot0, qm0, qmdot0, torque_fn, adm, dt,
                          duration, payload_mass=0.0, state_bound=1e3):
        """Fixed-step RK4 on the coupled admittance/arm plant.

        torque_fn(t, ev) -> (tau_p, tau_m).  State is [x_p, xp_dot, q_m,
        qm_dot]; returns (t, states) with states of shape (N+1, 6+2m).
        """
        nsteps = int(round(duration / dt)) if duration > 0 else 0
        m = self.p.n_arm

        def f(t, y):
            xp, xpd = y[:3], y[3:6]
            qm, qmd = y[6 : 6 + m], y[6 + m :]
            ev = self.eval(np.concatenate([xp, qm]), np.concatenate([xpd, qmd]),
                           payload_mass)
            tau_p, tau_m = torque_fn(t, ev)
            xpdd, qmdd = self.coupled_accel(ev, tau_p, tau_m, adm, xpd, qmd)
            return np.concatenate([xpd, xpdd, qmd, qmdd])

        t_grid = np.arange(nsteps + 1) * dt
        states = np.empty((nsteps + 1, 6 + 2 * m))
        y = np.concatenate([xp0, xpdot0, qm0, qmdot0]).astype(float)
        for i in range(nsteps + 1):
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > state_bound:
                raise DivergenceError(i * dt, "coupled state out of bounds")
            states[i] = y
            if i < nsteps:
                y = rk4_step(f, i * dt, y, dt)
        return t_grid, states


class EffectiveInertiaModel:
    """Model view with the platform inertia block replaced.

    The admittance interface makes the platform behave as the virtual
    system M_adm xdd + D_adm xd = tau_p, decoupled from the arm; the
    whole-body design for the coupled loop therefore uses
    blkdiag(M_platform_effective, M_m) instead of the reduced inertia.
    A winches-off platform is immobile, which is the limit of an
    arbitrarily large effective platform inertia.
    """

    def __init__(self, base: ReducedModel, platform_block):
        self.base = base
        self.platform_block = np.asarray(platform_block, dtype=float)

    def kinematic_terms(self, gamma, payload_mass=0.0):
        M, J1, J2, J3 = self.base.kinematic_terms(gamma, payload_mass)
        M = M.copy()
        M[:3, :3] = self.platform_block
        M[:3, 3:] = 0.0
        M[3:, :3] = 0.0
        return M, J1, J2, J3

    def effective_terms(self, ev: ModelEval, platform_damping):
        """(M_eff, C_eff) blocks for the hierarchy of the coupled loop."""
        n = ev.n
        M = np.zeros((n, n))
        M[:3, :3] = self.platform_block
        M[3:, 3:] = ev.M_m
        C = np.zeros((n, n))
        C[:3, :3] = platform_damping
        C[3:, 3:] = ev.C_m
        return M, C


def _christoffel(dM, qdot):
    """C matrix from Christoffel symbols given the dM/dq stack.

    dM carries only the q_m partials (platform partials vanish); qdot is the
    full-rate vector whose last len(dM) entries pair with dM.
    """
    m = dM.shape[0]
    n = dM.shape[1]
    qm_dot = qdot[n - m :]
    W = np.einsum("kij,k->ij", dM, qm_dot)
    # V[i, j] = sum_k dM[j][i, k] qdot[k], nonzero only for arm columns j
    V = np.zeros((n, n))
    V[:, n - m :] = np.einsum("jik,k->ij", dM, qdot)
    return 0.5 * (W + V - V.T)
