"""Planar validation tier: closed-chain kinematics and dynamics.

The planar mechanism is a pendulum (crane chain) carrying a platform that
hangs from two cables, with a short serial arm below the platform.  The
chain O -> A (pendulum) -> B (cable 1) -> platform closes through the second
cable A -> E, giving two scalar loop-closure constraints.

Coordinates (see states.py): q = [q1, q2, q3, q4, q5, q6, q_m...] with q1 the
pendulum angle, (q2, q3) and (q5, q6) the angle/length of cables 1 and 2,
and q4 the platform orientation.  All angles are absolute, measured from the
straight-down direction; a hanging point at angle th sits along
u(th) = [sin th, -cos th].

The unconstrained tree cuts the loop at the platform-side tip of cable 2;
both cable tips carry the small fitting mass from SystemParams so the tree
inertia stays positive definite.  Dynamics terms are assembled from body
Jacobians; the Coriolis matrix comes from Christoffel symbols of the inertia
matrix, with dM/dq obtained by complex step, so dM/dt - 2C is skew-symmetric
to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, SingularConfigError
from .geometry import CSTEP_H, perp2, rk4_step, rot2, drot2
from .states import DEP_IDX, IDX_Q1, IDX_Q2, IDX_Q3, IDX_Q4, IDX_Q5, IDX_Q6, N_BASE, indep_idx


def hang(theta):
    """Unit vector at angle theta from straight down (batched, complex-safe)."""
    theta = np.asarray(theta)
    out = np.empty(theta.shape + (2,), dtype=theta.dtype)
    out[..., 0] = np.sin(theta)
    out[..., 1] = -np.cos(theta)
    return out


def dhang(theta):
    theta = np.asarray(theta)
    out = np.empty(theta.shape + (2,), dtype=theta.dtype)
    out[..., 0] = np.cos(theta)
    out[..., 1] = np.sin(theta)
    return out


def hang_angle(v):
    """Angle from straight-down of a planar vector (real input only)."""
    return np.arctan2(v[..., 0], -v[..., 1])


@dataclass
class PlanarTerms:
    """Dynamics terms in one coordinate space."""

    M: np.ndarray
    C: np.ndarray
    g: np.ndarray
    space: str = "q"


@dataclass
class PlanarTrajectory:
    t: np.ndarray
    q: np.ndarray          # closed-chain coordinates at each step (N+1, n)
    qdot: np.ndarray
    energy: np.ndarray
    residual: np.ndarray   # max |loop closure branch difference|
    aqdot: np.ndarray      # max |A(q) qdot|
    lam: np.ndarray | None = None
    eta: np.ndarray | None = None
    etadot: np.ndarray | None = None


class PlanarModel:
    """Planar closed-chain model derived from a SystemParams.

    winch_spring, when given, is (l0_cable1, l0_cable2, stiffness): a
    conservative spring on each prismatic cable coordinate standing in for
    self-locking winch gearing.  It keeps unforced motion bounded while
    leaving the system conservative, which the energy tests rely on.
    """

    def __init__(self, params, winch_spring=None):
        self.p = params
        self.m = params.n_arm
        self.n = N_BASE + self.m
        self.indep = list(indep_idx(self.m))
        self.dep = list(DEP_IDX)
        a = params.cable_attach
        half_width = 0.5 * (np.max(a[:, 0]) - np.min(a[:, 0]))
        height = float(np.mean(a[:, 2]))
        if half_width <= 0:
            raise ValueError("cable_attach has no lateral extent for the planar tier")
        self.b_left = np.array([-half_width, height])   # cable 1 attachment (B)
        self.b_right = np.array([half_width, height])   # cable 2 attachment (E)
        self.d_mount = np.array([params.arm_mount[0], params.arm_mount[2]])
        self.arm_offsets = np.array([l.offset[:2] for l in params.arm_links])
        self.arm_coms = np.array([l.com[:2] for l in params.arm_links])
        self.arm_masses = np.array([l.mass for l in params.arm_links])
        self.arm_inertias = np.array([l.inertia[2, 2] for l in params.arm_links])
        self.ee_offset = np.array(params.ee_offset[:2])
        self.platform_inertia = float(params.platform_inertia[1, 1])
        self.winch_spring = winch_spring
        self.sing_tol = 1e-8

    # ------------------------------------------------------------------
    # consistent-state construction
    # ------------------------------------------------------------------

    def q_from_platform(self, q1, xc, q4, yc, qm):
        """Solve the dependent cable coordinates for a given platform pose.

        The two cable vectors follow directly from the hook and attachment
        positions (one polar conversion per cable), so the returned q
        satisfies the loop closure exactly.
        """
        qm = np.atleast_1d(np.asarray(qm, dtype=float))
        A = self.p.l1 * hang(q1)
        C = np.array([xc, yc])
        R = rot2(q4)
        vB = C + R @ self.b_left - A
        vE = C + R @ self.b_right - A
        q = np.zeros(self.n)
        q[IDX_Q1] = q1
        q[IDX_Q2] = hang_angle(vB)
        q[IDX_Q3] = np.hypot(vB[0], vB[1])
        q[IDX_Q4] = q4
        q[IDX_Q5] = hang_angle(vE)
        q[IDX_Q6] = np.hypot(vE[0], vE[1])
        q[N_BASE:] = qm
        return q

    def gen_state(self, q1, xc, q4, yc, qm, eta_dot=None):
        """Consistent (q, qdot) from a platform pose and serial-rate vector."""
        q = self.q_from_platform(q1, xc, q4, yc, qm)
        if eta_dot is None:
            qdot = np.zeros(self.n)
        else:
            eta_dot = np.asarray(eta_dot, dtype=float)
            qdot = self.selection_matrix(q) @ (self.serial_map(q) @ eta_dot)
        return q, qdot

    def eta_of_q(self, q):
        C = self.platform_center(q)
        return np.concatenate(([q[IDX_Q1], C[..., 0], q[IDX_Q4], C[..., 1]], q[N_BASE:]))

    def delta_of_q(self, q):
        return q[self.indep]

    def delta_of_eta(self, eta):
        """Closed-form delta(eta); the serial map B is its Jacobian."""
        q1, xc, q4, yc = eta[0], eta[1], eta[2], eta[3]
        q = self.q_from_platform(q1, xc, q4, yc, eta[4:])
        return q[self.indep]

    def q_of_eta(self, eta):
        return self.q_from_platform(eta[0], eta[1], eta[2], eta[3], eta[4:])

    def eta_rates(self, q, qdot):
        """eta_dot from a consistent (q, qdot)."""
        JC = self._platform_center_jacobian(q)
        cdot = JC @ qdot
        return np.concatenate(
            ([qdot[IDX_Q1], cdot[0], qdot[IDX_Q4], cdot[1]], qdot[N_BASE:])
        )

    # ------------------------------------------------------------------
    # loop closure and constraint machinery
    # ------------------------------------------------------------------

    def loop_closure_position(self, q):
        """Platform center along each branch: O->A->B->C and O->A->E->C."""
        A = self.p.l1 * hang(q[..., IDX_Q1])
        R = _rot2b(q[..., IDX_Q4])
        c1 = A + q[..., IDX_Q3, None] * hang(q[..., IDX_Q2]) - _mv(R, self.b_left)
        c2 = A + q[..., IDX_Q6, None] * hang(q[..., IDX_Q5]) - _mv(R, self.b_right)
        return c1, c2

    def closure_residual(self, q):
        c1, c2 = self.loop_closure_position(q)
        return c1 - c2

    def platform_center(self, q):
        c1, _ = self.loop_closure_position(q)
        return c1

    def constraint_matrix(self, q):
        """Pfaffian matrix A(q), the Jacobian of the branch difference.

        A(q) qdot = 0 for every velocity tangent to the closure manifold.
        The pendulum and arm columns are zero: both branches share the
        pendulum and the arm hangs below the closure.
        """
        q = np.asarray(q)
        batch = q.shape[:-1]
        A = np.zeros(batch + (2, self.n), dtype=q.dtype)
        A[..., :, IDX_Q2] = q[..., IDX_Q3, None] * dhang(q[..., IDX_Q2])
        A[..., :, IDX_Q3] = hang(q[..., IDX_Q2])
        A[..., :, IDX_Q4] = _mv(_drot2b(q[..., IDX_Q4]), self.b_right - self.b_left)
        A[..., :, IDX_Q5] = -q[..., IDX_Q6, None] * dhang(q[..., IDX_Q5])
        A[..., :, IDX_Q6] = -hang(q[..., IDX_Q5])
        return A

    def constraint_rank_ok(self, q):
        A = self.constraint_matrix(q)
        s = np.linalg.svd(np.real(A), compute_uv=False)
        return bool(s[-1] > self.sing_tol * s[0])

    def selection_matrix(self, q):
        """S with q_dot = S delta_dot; identity rows on the independent block.

        Raises SingularConfigError when the dependent 2x2 sub-block of A is
        not invertible (cable directions degenerate).
        """
        A = self.constraint_matrix(q)
        Ad = A[..., :, self.dep]
        sv = np.linalg.svd(np.real(Ad), compute_uv=False)
        if sv[..., -1].min() <= self.sing_tol * sv[..., 0].max():
            raise SingularConfigError(
                "dependent sub-block of the constraint matrix is singular"
            )
        Ai = A[..., :, self.indep]
        X = -np.linalg.solve(Ad, Ai)
        S = np.zeros(np.shape(q)[:-1] + (self.n, self.n - 2), dtype=np.asarray(q).dtype)
        for col, j in enumerate(self.indep):
            S[..., j, col] = 1.0
        S[..., self.dep, :] = X
        return S

    def serial_map(self, q):
        """B with delta_dot = B eta_dot, from the closed-form delta(eta).

        The cable lengths are distances from the hook to the platform
        attachments, so their partials are projections onto the cable unit
        vectors.  Raises SingularConfigError when the two cable directions
        are parallel (the platform pose no longer determines both lengths
        independently).
        """
        q = np.asarray(q)
        uB = hang(q[..., IDX_Q2])
        uE = hang(q[..., IDX_Q5])
        det = uB[..., 0] * uE[..., 1] - uB[..., 1] * uE[..., 0]
        if np.min(np.abs(np.real(det))) <= self.sing_tol:
            raise SingularConfigError("cables parallel: serial map singular")
        nd = self.n - 2
        B = np.zeros(q.shape[:-1] + (nd, nd), dtype=q.dtype)
        B[..., 0, 0] = 1.0
        B[..., 2, 2] = 1.0
        for k in range(self.m):
            B[..., 4 + k, 4 + k] = 1.0
        dA = self.p.l1 * dhang(q[..., IDX_Q1])
        RpL = _mv(_drot2b(q[..., IDX_Q4]), self.b_left)
        RpR = _mv(_drot2b(q[..., IDX_Q4]), self.b_right)
        for row, (u, Rp) in ((1, (uB, RpL)), (3, (uE, RpR))):
            B[..., row, 0] = -_dot(u, dA)
            B[..., row, 1] = u[..., 0]
            B[..., row, 2] = _dot(u, Rp)
            B[..., row, 3] = u[..., 1]
        return B

    # ------------------------------------------------------------------
    # body kinematics (positions + analytic Jacobians, batched, complex-safe)
    # ------------------------------------------------------------------

    def _platform_center_jacobian(self, q):
        q = np.asarray(q)
        J = np.zeros(q.shape[:-1] + (2, self.n), dtype=q.dtype)
        J[..., :, IDX_Q1] = self.p.l1 * dhang(q[..., IDX_Q1])
        J[..., :, IDX_Q2] = q[..., IDX_Q3, None] * dhang(q[..., IDX_Q2])
        J[..., :, IDX_Q3] = hang(q[..., IDX_Q2])
        J[..., :, IDX_Q4] = -_mv(_drot2b(q[..., IDX_Q4]), self.b_left)
        return J

    def _bodies(self, q):
        """Point/rigid bodies of the cut-open tree.

        Returns (point_bodies, rot_bodies): point_bodies is a list of
        (mass, pos (...,2), J (...,2,n)); rot_bodies of (inertia, jrow (...,n)).
        """
        q = np.asarray(q)
        batch = q.shape[:-1]
        dt = q.dtype
        n = self.n
        l1 = self.p.l1

        A = l1 * hang(q[..., IDX_Q1])
        JA = np.zeros(batch + (2, n), dtype=dt)
        JA[..., :, IDX_Q1] = l1 * dhang(q[..., IDX_Q1])

        # cable 1 tip / platform attachment point B
        Bpt = A + q[..., IDX_Q3, None] * hang(q[..., IDX_Q2])
        JB = JA.copy()
        JB[..., :, IDX_Q2] = q[..., IDX_Q3, None] * dhang(q[..., IDX_Q2])
        JB[..., :, IDX_Q3] = hang(q[..., IDX_Q2])

        # cut cable 2 tip (free end of the tree)
        Ept = A + q[..., IDX_Q6, None] * hang(q[..., IDX_Q5])
        JE = JA.copy()
        JE[..., :, IDX_Q5] = q[..., IDX_Q6, None] * dhang(q[..., IDX_Q5])
        JE[..., :, IDX_Q6] = hang(q[..., IDX_Q5])

        R4 = _rot2b(q[..., IDX_Q4])
        C = Bpt - _mv(R4, self.b_left)
        JC = JB.copy()
        JC[..., :, IDX_Q4] = perp2(C - Bpt)

        point_bodies = [
            (self.p.hook_mass, A, JA),
            (self.p.cable_tip_mass, Bpt, JB),
            (self.p.cable_tip_mass, Ept, JE),
            (self.p.platform_mass, C, JC),
        ]
        jrow_platform = np.zeros(batch + (n,), dtype=dt)
        jrow_platform[..., IDX_Q4] = 1.0
        rot_bodies = [(self.platform_inertia, jrow_platform)]

        # arm chain below the mount
        D = C + _mv(R4, self.d_mount)
        joint = D
        phi = q[..., IDX_Q4]
        jrow = jrow_platform
        joints, jrows = [], []
        for k in range(self.m):
            joint = joint + _mv(_rot2b(phi), self.arm_offsets[k])
            phi = phi + q[..., N_BASE + k]
            jrow = jrow.copy()
            jrow[..., N_BASE + k] = 1.0
            joints.append(joint)
            jrows.append(jrow)
            com = joint + _mv(_rot2b(phi), self.arm_coms[k])
            Jcom = JB.copy()
            Jcom[..., :, IDX_Q4] = perp2(com - Bpt)
            for i in range(k + 1):
                Jcom[..., :, N_BASE + i] = perp2(com - joints[i])
            point_bodies.append((self.arm_masses[k], com, Jcom))
            rot_bodies.append((self.arm_inertias[k], jrow))
        return point_bodies, rot_bodies

    def com_position(self, q):
        """COM of everything riding on the cables (platform, arm, cable tips).

        The hook mass is excluded: it sits at the suspension point of the
        cable stage and does not contribute to the gravitational torque the
        winches act against.
        """
        points, _ = self._bodies(q)
        total = 0.0
        weighted = 0.0
        for mass, pos, _ in points[1:]:
            total += mass
            weighted = weighted + mass * pos
        return weighted / total

    def ee_position(self, q):
        """Arm end-effector point (diagnostics/logging)."""
        q = np.asarray(q)
        A = self.p.l1 * hang(q[..., IDX_Q1])
        Bpt = A + q[..., IDX_Q3, None] * hang(q[..., IDX_Q2])
        R4 = _rot2b(q[..., IDX_Q4])
        pos = Bpt - _mv(R4, self.b_left) + _mv(R4, self.d_mount)
        phi = q[..., IDX_Q4]
        for k in range(self.m):
            pos = pos + _mv(_rot2b(phi), self.arm_offsets[k])
            phi = phi + q[..., N_BASE + k]
        return pos + _mv(_rot2b(phi), self.ee_offset)

    # ------------------------------------------------------------------
    # dynamics terms in q-space
    # ------------------------------------------------------------------

    def _mass_gravity(self, q):
        """Inertia matrix and gravity vector from a single body sweep (batched)."""
        points, rots = self._bodies(q)
        q = np.asarray(q)
        M = np.zeros(q.shape[:-1] + (self.n, self.n), dtype=q.dtype)
        g = np.zeros(q.shape[:-1] + (self.n,), dtype=q.dtype)
        for mass, _, J in points:
            M = M + mass * np.einsum("...ak,...al->...kl", J, J)
            g = g + mass * self.p.gravity * J[..., 1, :]
        for inertia, jrow in rots:
            M = M + inertia * np.einsum("...k,...l->...kl", jrow, jrow)
        if self.winch_spring is not None:
            l01, l02, k = self.winch_spring
            g[..., IDX_Q3] += k * (q[..., IDX_Q3] - l01)
            g[..., IDX_Q6] += k * (q[..., IDX_Q6] - l02)
        return M, g

    def mass_matrix(self, q):
        return self._mass_gravity(q)[0]

    def gravity(self, q):
        return self._mass_gravity(q)[1]

    def potential(self, q):
        points, _ = self._bodies(q)
        q = np.asarray(q)
        V = np.zeros(q.shape[:-1], dtype=q.dtype)
        for mass, pos, _ in points:
            V = V + mass * self.p.gravity * pos[..., 1]
        if self.winch_spring is not None:
            l01, l02, k = self.winch_spring
            V = V + 0.5 * k * ((q[..., IDX_Q3] - l01) ** 2 + (q[..., IDX_Q6] - l02) ** 2)
        return V

    def kinetic(self, q, qdot):
        M = self.mass_matrix(q)
        return 0.5 * qdot @ M @ qdot

    def total_energy(self, q, qdot):
        """T + V from a single body sweep."""
        points, rots = self._bodies(q)
        T = 0.0
        V = 0.0
        for mass, pos, J in points:
            v = J @ qdot
            T += 0.5 * mass * (v @ v)
            V += mass * self.p.gravity * pos[1]
        for inertia, jrow in rots:
            w = jrow @ qdot
            T += 0.5 * inertia * w * w
        if self.winch_spring is not None:
            l01, l02, k = self.winch_spring
            V += 0.5 * k * ((q[IDX_Q3] - l01) ** 2 + (q[IDX_Q6] - l02) ** 2)
        return float(T + V)

    def mass_matrix_partials(self, q, h=CSTEP_H):
        """dM/dq_k for every k, one batched complex-step evaluation."""
        q = np.asarray(q, dtype=float)
        batch = np.repeat(q[None, :].astype(complex), self.n, axis=0)
        batch += 1j * h * np.eye(self.n)
        return np.imag(self.mass_matrix(batch)) / h

    def coriolis(self, q, qdot, dM=None):
        """C(q, qdot) from Christoffel symbols of the inertia matrix."""
        if dM is None:
            dM = self.mass_matrix_partials(q)
        W = np.einsum("kij,k->ij", dM, qdot)
        V = np.einsum("jik,k->ij", dM, qdot)
        return 0.5 * (W + V - V.T)

    def terms(self, q, qdot):
        """M, C, g in q-space from one batched complex evaluation.

        Row 0 of the batch is the unperturbed state (real parts give M and
        g); rows 1..n carry the complex steps for dM/dq.
        """
        q = np.asarray(q, dtype=float)
        batch = np.repeat(q[None, :].astype(complex), self.n + 1, axis=0)
        batch[1:] += 1j * CSTEP_H * np.eye(self.n)
        M_b, g_b = self._mass_gravity(batch)
        M = np.real(M_b[0])
        g = np.real(g_b[0])
        dM = np.imag(M_b[1:]) / CSTEP_H
        return PlanarTerms(M=M, C=self.coriolis(q, qdot, dM), g=g, space="q")

    # ------------------------------------------------------------------
    # reduction to the serial coordinates eta
    # ------------------------------------------------------------------

    def reduce_terms(self, q, qdot):
        """Dynamics terms in eta-space: congruence transform by S B plus the
        velocity terms from d(SB)/dt."""
        qb = np.repeat(q[None, :].astype(complex), 2, axis=0)
        qb[1] += 1j * CSTEP_H * qdot
        S_b = self.selection_matrix(qb)
        B_b = self.serial_map(qb)
        S, Sdot = np.real(S_b[0]), np.imag(S_b[1]) / CSTEP_H
        B, Bdot = np.real(B_b[0]), np.imag(B_b[1]) / CSTEP_H
        hat = self.terms(q, qdot)
        SB = S @ B
        M = SB.T @ hat.M @ SB
        C = B.T @ (S.T @ hat.M @ S @ Bdot + S.T @ (hat.M @ Sdot + hat.C @ S) @ B)
        g = SB.T @ hat.g
        return PlanarTerms(M=M, C=C, g=g, space="eta"), S, B

    def map_torque(self, q, tau_hat):
        S = self.selection_matrix(q)
        B = self.serial_map(q)
        return B.T @ (S.T @ tau_hat)

    # ------------------------------------------------------------------
    # equations of motion
    # ------------------------------------------------------------------

    def closed_chain_accel(self, q, qdot, tau_hat, baumgarte=0.0):
        """Constrained accelerations and cable constraint forces.

        Solves the saddle system [[M, -A^T], [A, 0]] [qdd; lam] =
        [tau - C qd - g; -Adot qd - stabilization].  The multipliers lam
        parametrize the internal forces along the two closure constraints
        and are returned as diagnostics.
        """
        hat = self.terms(q, qdot)
        qb = np.repeat(q[None, :].astype(complex), 2, axis=0)
        qb[1] += 1j * CSTEP_H * qdot
        A_b = self.constraint_matrix(qb)
        A = np.real(A_b[0])
        Adot = np.imag(A_b[1]) / CSTEP_H
        rhs_c = -Adot @ qdot
        if baumgarte > 0:
            rhs_c = rhs_c - 2.0 * baumgarte * (A @ qdot) - baumgarte**2 * self.closure_residual(q)
        kkt = np.zeros((self.n + 2, self.n + 2))
        kkt[: self.n, : self.n] = hat.M
        kkt[: self.n, self.n :] = -A.T
        kkt[self.n :, : self.n] = A
        rhs = np.concatenate([tau_hat - hat.C @ qdot - hat.g, rhs_c])
        sol = np.linalg.solve(kkt, rhs)
        return sol[: self.n], sol[self.n :]

    def reduced_accel(self, eta, etadot, tau_hat_fn, t):
        q = self.q_of_eta(eta)
        qdot = self.selection_matrix(q) @ (self.serial_map(q) @ etadot)
        terms, S, B = self.reduce_terms(q, qdot)
        tau_eta = B.T @ (S.T @ tau_hat_fn(t, q, qdot))
        etadd = np.linalg.solve(terms.M, tau_eta - terms.C @ etadot - terms.g)
        return etadd, q, qdot

    # ------------------------------------------------------------------
    # integration
    # ------------------------------------------------------------------

    def simulate_closed(self, q0, qdot0, tau_fn, dt, duration,
                        baumgarte=0.0, state_bound=1e3):
        """Fixed-step RK4 on the constrained q-space model.

        Logs loop-closure residual, velocity-constraint violation, energy and
        the constraint forces at every step.  Raises DivergenceError when the
        state norm exceeds state_bound.
        """
        nsteps = int(round(duration / dt)) if duration > 0 else 0
        n = self.n

        def f(t, y):
            q, qd = y[:n], y[n:]
            qdd, _ = self.closed_chain_accel(q, qd, tau_fn(t, q, qd), baumgarte)
            return np.concatenate([qd, qdd])

        t_grid = np.arange(nsteps + 1) * dt
        qs = np.empty((nsteps + 1, n))
        qds = np.empty((nsteps + 1, n))
        E = np.empty(nsteps + 1)
        res = np.empty(nsteps + 1)
        aqd = np.empty(nsteps + 1)
        lams = np.empty((nsteps + 1, 2))
        y = np.concatenate([np.asarray(q0, dtype=float), np.asarray(qdot0, dtype=float)])
        for i in range(nsteps + 1):
            t = i * dt
            q, qd = y[:n], y[n:]
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > state_bound:
                raise DivergenceError(t, "planar state out of bounds")
            qs[i], qds[i] = q, qd
            E[i] = self.total_energy(q, qd)
            res[i] = np.max(np.abs(self.closure_residual(q)))
            aqd[i] = np.max(np.abs(self.constraint_matrix(q) @ qd))
            qdd, lams[i] = self.closed_chain_accel(q, qd, tau_fn(t, q, qd), baumgarte)
            if i < nsteps:
                # reuse the diagnostics evaluation as the first RK4 stage
                k1 = np.concatenate([qd, qdd])
                k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
                k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
                k4 = f(t + dt, y + dt * k3)
                y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return PlanarTrajectory(t=t_grid, q=qs, qdot=qds, energy=E, residual=res,
                                aqdot=aqd, lam=lams)

    def simulate_reduced(self, eta0, etadot0, tau_fn, dt, duration, state_bound=1e3):
        """Fixed-step RK4 on the unconstrained eta-space model.

        tau_fn provides torques in q-space; they are mapped through B^T S^T
        at the current state, so the same provider drives both simulations.
        """
        nsteps = int(round(duration / dt)) if duration > 0 else 0
        nd = self.n - 2

        def f(t, y):
            eta, etad = y[:nd], y[nd:]
            etadd, _, _ = self.reduced_accel(eta, etad, tau_fn, t)
            return np.concatenate([etad, etadd])

        t_grid = np.arange(nsteps + 1) * dt
        etas = np.empty((nsteps + 1, nd))
        etads = np.empty((nsteps + 1, nd))
        qs = np.empty((nsteps + 1, self.n))
        qds = np.empty((nsteps + 1, self.n))
        E = np.empty(nsteps + 1)
        res = np.zeros(nsteps + 1)
        aqd = np.empty(nsteps + 1)
        y = np.concatenate([np.asarray(eta0, dtype=float), np.asarray(etadot0, dtype=float)])
        for i in range(nsteps + 1):
            eta, etad = y[:nd], y[nd:]
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > state_bound:
                raise DivergenceError(i * dt, "planar eta state out of bounds")
            q = self.q_of_eta(eta)
            qd = self.selection_matrix(q) @ (self.serial_map(q) @ etad)
            etas[i], etads[i] = eta, etad
            qs[i], qds[i] = q, qd
            E[i] = self.total_energy(q, qd)
            aqd[i] = np.max(np.abs(self.constraint_matrix(q) @ qd))
            if i < nsteps:
                y = rk4_step(f, i * dt, y, dt)
        return PlanarTrajectory(t=t_grid, q=qs, qdot=qds, energy=E, residual=res,
                                aqdot=aqd, eta=etas, etadot=etads)

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def state_errors(self, state, residual_tol=1e-9):
        """Invariant check for a ClosedChainState; returns violation strings."""
        errs = []
        if state.q.size != self.n:
            return [f"q: expected dimension {self.n}, got {state.q.size}"]
        res = np.max(np.abs(self.closure_residual(state.q)))
        if res > residual_tol:
            errs.append(f"loop-closure residual {res:.2e} m exceeds {residual_tol:.0e}")
        if not state.cable_lengths_in_range(self.p):
            errs.append("cable length coordinate outside winch range")
        return errs

    def equilibrium_spring_reference(self, q, stiffness):
        """Spring rest lengths making the given configuration an equilibrium.

        Solves g_eta = 0 for the two rest lengths (least squares; exact for
        symmetric configurations).  Returns (l0_cable1, l0_cable2).
        """
        spring_save = self.winch_spring
        self.winch_spring = None
        try:
            g_grav = self.gravity(q)
        finally:
            self.winch_spring = spring_save
        S = self.selection_matrix(q)
        B = self.serial_map(q)
        SBt = (S @ B).T
        base = SBt @ g_grav
        E = np.zeros((self.n, 2))
        E[IDX_Q3, 0] = 1.0
        E[IDX_Q6, 1] = 1.0
        N = SBt @ E
        s, *_ = np.linalg.lstsq(stiffness * N, -base, rcond=None)
        return q[IDX_Q3] - s[0], q[IDX_Q6] - s[1]

    def random_states(self, rng, count, speed=0.5):
        """Consistent random states inside the cable workspace (test helper)."""
        out = []
        while len(out) < count:
            q1 = rng.uniform(-0.25, 0.25)
            q4 = rng.uniform(-0.2, 0.2)
            xr = rng.uniform(-0.2, 0.2)
            drop = rng.uniform(0.7, 1.05)
            A = self.p.l1 * hang(q1)
            qm = rng.uniform(-1.2, 1.2, size=self.m)
            q = self.q_from_platform(q1, A[0] + xr, q4, A[1] - drop, qm)
            lo, hi = self.p.cable_length_min, self.p.cable_length_max
            if not (lo + 0.02 <= q[IDX_Q3] <= hi - 0.02 and lo + 0.02 <= q[IDX_Q6] <= hi - 0.02):
                continue
            etad = rng.uniform(-speed, speed, size=self.n - 2)
            qdot = self.selection_matrix(q) @ (self.serial_map(q) @ etad)
            out.append((q, qdot))
        return out


def _rot2b(theta):
    theta = np.asarray(theta)
    out = np.empty(theta.shape + (2, 2), dtype=theta.dtype)
    c, s = np.cos(theta), np.sin(theta)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _drot2b(theta):
    theta = np.asarray(theta)
    out = np.empty(theta.shape + (2, 2), dtype=theta.dtype)
    c, s = np.cos(theta), np.sin(theta)
    out[..., 0, 0] = -s
    out[..., 0, 1] = -c
    out[..., 1, 0] = c
    out[..., 1, 1] = -s
    return out


def _mv(R, v):
    return np.einsum("...ab,b->...a", R, np.asarray(v))


def _dot(a, b):
    return np.sum(a * b, axis=-1)
