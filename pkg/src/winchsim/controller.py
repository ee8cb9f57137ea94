"""Hierarchical whole-body impedance controller with an admittance interface.

Three priority-ordered tasks share the 3+m degrees of freedom:
  1. end-effector pose (6 DOF)
  2. horizontal system COM driven to zero (COM velocity space, 3 DOF)
  3. elbow damping (1 DOF)

Lower-priority task forces are premultiplied by dynamically consistent
null-space projectors built from inertia-weighted generalized inverses of
the augmented higher-priority Jacobians, which makes the stacked task
inertia block-diagonal and leaves higher-priority task accelerations
untouched.  The stacked (extended) Jacobian is square and invertible thanks
to the third task, so the transformed Coriolis matrix is well defined and
its off-diagonal task blocks can be cancelled by a feedforward torque.

The platform is position-controlled through the winches, so its torque
channel passes through a virtual admittance (M_adm xdd + D_adm xd = tau_p)
whose output displacement feeds the cable IK and is also fed back into the
controller model state.  The arm torque channel receives an extra term
cancelling the inertia/Coriolis coupling that the admittance-driven platform
motion would otherwise inject into the arm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HierarchySingularError
from .geometry import CSTEP_H, orientation_error, spd_sqrt
from .params import AdmittanceParams, TaskTargets

TASK_DIMS = (6, 3, 1)


@dataclass
class Hierarchy:
    """Null-space projectors and decoupled task quantities at one state."""

    N: list            # projectors N_1..N_3, (n, n); N_1 = I
    Jbar: list         # decoupled task Jacobians J_i N_i^T
    Jbar_full: np.ndarray   # stacked, (n, n), invertible away from singularities
    Lambda_full: np.ndarray  # (Jbar M^-1 Jbar^T)^-1, block-diagonal by construction
    mu: np.ndarray | None = None  # transformed Coriolis matrix, filled on demand

    @property
    def task_slices(self):
        out, k = [], 0
        for d in TASK_DIMS:
            out.append(slice(k, k + d))
            k += d
        return out

    def Lambda_block(self, i):
        s = self.task_slices[i]
        return self.Lambda_full[s, s]


def _damping(Ja, rel=1e-4, hard=1e-8):
    """Tikhonov term for the Ja M^-1 Ja^T solve, from Ja's singular values.

    Exactly zero while sigma_min >= rel * sigma_max, so the consistency
    identities hold to machine precision away from singularities; below the
    threshold a ramp in sigma^2 units bounds the inverse.  The decision uses
    the real part so the construction stays valid inside complex-step
    differentiation (the ramp is frozen there).
    """
    Jr = np.real(Ja)
    w = np.linalg.eigvalsh(Jr @ Jr.T)  # squared singular values
    smax2 = float(w[-1])
    smin2 = float(max(w[0], 0.0))
    if smax2 <= 0 or smin2 < (hard**2) * smax2:
        raise HierarchySingularError("augmented task Jacobian lost row rank")
    if smin2 < (rel**2) * smax2:
        return rel**2 * smax2 - smin2
    return 0.0


def build_hierarchy(gamma, M, J1, J2, J3, C=None, Jbar_dot=None, damping_rel=1e-4,
                    assume_regular=False):
    """Construct the task hierarchy at one state.

    The projector of task i annihilates, through the inertia metric, the
    torques of every higher-priority task: N_i = I - Ja^T (Ja M^-1 Ja^T)^-1
    Ja M^-1 with Ja the augmented Jacobian of tasks 1..i-1.  When C and
    Jbar_dot are given, the transformed Coriolis matrix mu is attached.
    assume_regular skips the singularity checks (used inside complex-step
    differentiation, where the branch is frozen anyway).

    Raises HierarchySingularError when an augmented Jacobian loses row rank
    beyond what the damping ramp can absorb.
    """
    n = M.shape[-1]
    tasks = [J1, J2, J3]
    dtype = np.result_type(M, J1)
    eye = np.eye(n, dtype=dtype)
    N = [eye]
    for i in (1, 2):
        Ja = np.vstack(tasks[:i])
        X = np.linalg.solve(M, Ja.T)  # M^-1 Ja^T
        W = Ja @ X
        lam = 0.0 if assume_regular else _damping(Ja, damping_rel)
        if lam:
            W = W + lam * np.eye(W.shape[0])
        Y = np.linalg.solve(W, X.T)  # W^-1 Ja M^-1
        N.append(eye - Ja.T @ Y)
    Jbar = [tasks[i] @ N[i].T for i in range(3)]
    Jbar_full = np.vstack(Jbar)
    Z = np.linalg.solve(M, Jbar_full.T)
    Wb = Jbar_full @ Z
    lam_b = 0.0 if assume_regular else _damping(Jbar_full, damping_rel)
    if lam_b:
        Wb = Wb + lam_b * np.eye(n)
    Lambda_full = np.linalg.inv(Wb)
    hier = Hierarchy(N=N, Jbar=Jbar, Jbar_full=Jbar_full, Lambda_full=Lambda_full)
    if C is not None and Jbar_dot is not None:
        hier.mu = transformed_coriolis(hier, M, C, Jbar_dot)
    return hier


def transformed_coriolis(hier, M, C, Jbar_dot):
    """mu = Jbar^-T (C - M Jbar^-1 dJbar/dt) Jbar^-1."""
    J = hier.Jbar_full
    inner = C - M @ np.linalg.solve(J, Jbar_dot)
    Z = np.linalg.solve(J.T, inner)       # J^-T inner
    return np.linalg.solve(J.T, Z.T).T    # Z J^-1


def extended_jacobian_rate(model, gamma, gammadot, payload_mass=0.0, h=CSTEP_H):
    """d/dt of the stacked decoupled Jacobian along gammadot (complex step)."""
    gc = np.asarray(gamma, dtype=complex) + 1j * h * np.asarray(gammadot)
    Mc, J1c, J2c, J3c = model.kinematic_terms(gc, payload_mass)
    hier_c = build_hierarchy(gc, Mc, J1c, J2c, J3c, assume_regular=True)
    return np.imag(hier_c.Jbar_full) / h


def coriolis_decoupling(hier: Hierarchy, nu):
    """Feedforward torque cancelling the off-block-diagonal mu couplings.

    tau_mu = sum_i Jbar_i^T (sum_{j != i} mu_ij nu_j); identically zero for
    a single-task hierarchy or when all task velocities vanish.
    """
    if hier.mu is None:
        raise ValueError("hierarchy was built without a transformed Coriolis matrix")
    mu_off = hier.mu.copy()
    for s in hier.task_slices:
        mu_off[s, s] = 0.0
    return hier.Jbar_full.T @ (mu_off @ nu)


def impedance_force(p_err, x_dot, K_P, K_D):
    """Spring/damper task force: F = -K_P p - K_D xdot."""
    return -np.atleast_2d(K_P) @ np.atleast_1d(p_err) - np.atleast_2d(K_D) @ np.atleast_1d(x_dot)


def critically_damped_kd(Lambda, K_P, zeta=1.0):
    """Damping matrix by double diagonalization of (Lambda, K_P)."""
    w, V = np.linalg.eigh(0.5 * (Lambda + Lambda.T))
    w = np.clip(w, 1e-12, None)
    L_h = (V * np.sqrt(w)) @ V.T
    L_ih = (V / np.sqrt(w)) @ V.T
    core = spd_sqrt(L_ih @ K_P @ L_ih)
    return 2.0 * zeta * L_h @ core @ L_h


@dataclass
class ControlOutput:
    tau_gamma: np.ndarray
    tau_p: np.ndarray
    tau_m: np.ndarray
    F: list
    nu: np.ndarray
    tau_mu: np.ndarray
    hier: Hierarchy


def task_forces(ev, targets: TaskTargets, hier: Hierarchy):
    """Impedance forces of the three tasks at the evaluated state.

    Task 1 uses the position difference plus the quaternion-vector
    orientation error; task 2 acts on the horizontal COM only, with a
    damping-only vertical channel; task 3 is damping-only.  Damping gains
    left unset are critically damped against the decoupled task inertias.
    """
    p1 = np.concatenate([
        ev.ee_pos - targets.x_e_des_pos,
        orientation_error(ev.ee_quat, targets.x_e_des_quat),
    ])
    xd1 = ev.J1 @ ev.gammadot
    K_D1 = targets.K_D1
    if K_D1 is None:
        K_D1 = critically_damped_kd(hier.Lambda_block(0), targets.K_P1, targets.zeta)
    F1 = impedance_force(p1, xd1, targets.K_P1, K_D1)

    p2 = ev.com[:2] - targets.x_com_des
    xd2 = ev.J2 @ ev.gammadot
    K_D2 = targets.K_D2
    if K_D2 is None:
        K_D2 = critically_damped_kd(
            hier.Lambda_block(1)[:2, :2], targets.K_P2, targets.zeta
        )
    F2 = np.zeros(3)
    F2[:2] = impedance_force(p2, xd2[:2], targets.K_P2, K_D2)
    F2[2] = -targets.kp_com_vertical * (ev.com[2] - targets.com_z_des) \
        - targets.kd_com_vertical * xd2[2]

    xd3 = ev.J3 @ ev.gammadot
    F3 = -targets.K_D3 * xd3

    return [F1, F2, F3], p1


def control_law(ev, hier: Hierarchy, targets: TaskTargets,
                enabled=(True, True, True)) -> ControlOutput:
    """Whole-body control torque: gravity compensation, Coriolis decoupling,
    and the projected task impedance forces.

    tau_gamma = g + tau_mu + sum_i Jbar_i^T F_i, split into platform and arm
    rows.  ``enabled`` can zero individual task forces without changing the
    hierarchy structure.
    """
    F, _ = task_forces(ev, targets, hier)
    F = [f if on else np.zeros_like(f) for f, on in zip(F, enabled)]
    nu = hier.Jbar_full @ ev.gammadot
    tau_mu = coriolis_decoupling(hier, nu)
    tau = ev.g + tau_mu
    for Jb, f in zip(hier.Jbar, F):
        tau = tau + Jb.T @ f
    return ControlOutput(
        tau_gamma=tau, tau_p=tau[:3], tau_m=tau[3:],
        F=F, nu=nu, tau_mu=tau_mu, hier=hier,
    )


# -- admittance interface -------------------------------------------------------

@dataclass
class AdmittanceState:
    x: np.ndarray
    v: np.ndarray


def admittance_update(tau_p, state: AdmittanceState, adm: AdmittanceParams, dt):
    """One exact step of M xdd + D xd = tau_p under a zero-order-hold input.

    M and D are diagonal, so each axis is an independent first-order system
    in velocity with the closed-form solution applied per step; the update
    is exact for constant tau_p regardless of dt.
    """
    m = np.diag(adm.M)
    d = np.diag(adm.D)
    a = d / m
    v_inf = np.asarray(tau_p, dtype=float) / d
    decay = np.exp(-a * dt)
    v_new = v_inf + (state.v - v_inf) * decay
    x_new = state.x + v_inf * dt + (state.v - v_inf) * (1.0 - decay) / a
    return AdmittanceState(x=x_new, v=v_new)


def admittance_accel(tau_p, state: AdmittanceState, adm: AdmittanceParams):
    return np.linalg.solve(adm.M, np.asarray(tau_p, dtype=float) - adm.D @ state.v)


def coupling_removal(ev, xp_ddot, xp_dot):
    """Arm-row torque cancelling the platform-motion coupling in the arm block."""
    return ev.M_pm @ xp_ddot + ev.C_pm @ xp_dot


def whole_body_step(model, gamma, gammadot, targets, payload_mass=0.0,
                    enabled=(True, True, True)):
    """Evaluate the model and the full control law at one state.

    Convenience wrapper used by the harness and the closed-loop tests;
    returns (ev, ControlOutput).
    """
    ev = model.eval(gamma, gammadot, payload_mass)
    Jbar_dot = extended_jacobian_rate(model, gamma, gammadot, payload_mass)
    hier = build_hierarchy(gamma, ev.M, ev.J1, ev.J2, ev.J3, C=ev.C, Jbar_dot=Jbar_dot)
    return ev, control_law(ev, hier, targets, enabled)
