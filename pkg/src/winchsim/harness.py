"""Scenario runner: wires dynamics, controller, winches and cable IK.

A scenario file is plain "key = value" text (see ``load_scenario``).  The 3D
control tier runs the full loop: whole-body control law at every step, the
platform torque channel through the admittance interface, cable IK to length
commands, winch servos tracking them, and the manipulator integrating the
coupled dynamics.  The platform state the controller sees is the admittance
output (no cable-length feedback); the winch-side platform position
reconstructed from the tracked cable lengths is logged as the measurement.
The planar tier integrates the closed-chain model under a scripted torque
and logs constraint residuals and energy.

Outputs: one CSV (fixed column order, see COLUMNS), a JSON summary
recomputable bit-for-bit from the CSV, and a gnuplot script regenerating the
experiment-style panels.  Runs are deterministic: identical scenario files
produce byte-identical CSVs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import (
    AdmittanceState,
    admittance_accel,
    admittance_update,
    build_hierarchy,
    control_law,
    coupling_removal,
    extended_jacobian_rate,
)
from .dynamics import EffectiveInertiaModel, ReducedModel
from .errors import CableRangeError, DivergenceError, SchemaError
from .kinematics import cable_fk, cable_ik
from .params import (
    AdmittanceParams,
    TaskTargets,
    default_params,
    default_planar_params,
    load_params,
    parse_kv_file,
)
from .planar import PlanarModel
from .states import IDX_Q3, IDX_Q6
from .winch import WinchParams, WinchState, servo_track

COLUMNS = (
    ["t"]
    + [f"ee_{a}" for a in "xyz"]
    + [f"ee_des_{a}" for a in "xyz"]
    + [f"com_{a}" for a in "xyz"]
    + [f"xp_{a}" for a in "xyz"]
    + [f"xp_des_{a}" for a in "xyz"]
    + ["l1", "l2", "l3"]
    + [f"tau_p_{a}" for a in "xyz"]
    + [f"tau_m_{i}" for i in range(1, 8)]
    + ["energy", "residual"]
)

STEADY_WINDOW = 2.0  # summary steady-state statistics use the trailing window [s]


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    dt: float
    tier: str = "3d"
    winches: bool = True
    seed: int = 0
    params_file: str | None = None
    arm_home: tuple = (0.0, 0.5, 0.0, -1.0, 0.0, 0.5, 0.0)
    platform_z: float = -0.95
    start_centered: bool = True
    kp_pos: float = 500.0
    kp_orn: float = 50.0
    kp_com: float = 200.0
    kd_pos: float = 0.0    # 0: critically damped against the task inertia
    kd_orn: float = 0.0
    kd_com: float = 0.0
    kd_elbow: float = 4.0
    kd_com_vertical: float = 30.0
    kp_com_vertical: float = 0.0  # optional vertical COM anchor spring
    zeta: float = 1.0
    adm_mass: float = 0.8
    adm_damping: float = 1.6
    waypoints: tuple = ()       # (t, dx, dy, dz) offsets from the initial EE position
    payload_events: tuple = ()  # (t, mass): EE payload mass from time t on
    planar_drop: float = 0.85
    planar_spring_k: float = 5000.0
    planar_torque_amp: tuple = (2.0, 1.0)
    planar_torque_freq: tuple = (0.5, 0.8)
    state_bound: float = 1e3

    def validate(self):
        problems = []
        if not self.name:
            problems.append("name: must be non-empty")
        if self.tier not in ("3d", "planar"):
            problems.append(f"tier: must be '3d' or 'planar', got {self.tier!r}")
        if not self.dt > 0:
            problems.append("dt: must be strictly positive")
        if self.duration < 0:
            problems.append("duration: must be non-negative")
        times = [w[0] for w in self.waypoints]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            problems.append("waypoint: times must be strictly increasing")
        if times and self.duration < times[-1]:
            problems.append("duration: must cover the last waypoint time")
        for t, mass in self.payload_events:
            if mass < 0:
                problems.append(f"payload: negative mass at t={t}")
            if t < 0:
                problems.append(f"payload: negative time {t}")
        return problems

    # canonical key=value dump used for hashing and the log header
    def kv_lines(self, include_winches=True):
        lines = [
            f"name={self.name}",
            f"tier={self.tier}",
            f"duration={self.duration!r}",
            f"dt={self.dt!r}",
            f"seed={self.seed}",
            f"params={self.params_file or ''}",
            f"arm_home={' '.join(repr(float(v)) for v in self.arm_home)}",
            f"platform_z={self.platform_z!r}",
            f"start_centered={str(self.start_centered).lower()}",
            f"kp_pos={self.kp_pos!r}",
            f"kp_orn={self.kp_orn!r}",
            f"kp_com={self.kp_com!r}",
            f"kd_pos={self.kd_pos!r}",
            f"kd_orn={self.kd_orn!r}",
            f"kd_com={self.kd_com!r}",
            f"kd_elbow={self.kd_elbow!r}",
            f"kd_com_vertical={self.kd_com_vertical!r}",
            f"kp_com_vertical={self.kp_com_vertical!r}",
            f"zeta={self.zeta!r}",
            f"adm_mass={self.adm_mass!r}",
            f"adm_damping={self.adm_damping!r}",
            f"planar_drop={self.planar_drop!r}",
            f"planar_spring_k={self.planar_spring_k!r}",
            f"planar_torque_amp={' '.join(repr(float(v)) for v in self.planar_torque_amp)}",
            f"planar_torque_freq={' '.join(repr(float(v)) for v in self.planar_torque_freq)}",
            f"state_bound={self.state_bound!r}",
        ]
        for t, dx, dy, dz in self.waypoints:
            lines.append(f"waypoint={t!r} {dx!r} {dy!r} {dz!r}")
        for t, mass in self.payload_events:
            lines.append(f"payload={t!r} {mass!r}")
        if include_winches:
            lines.append(f"winches={'on' if self.winches else 'off'}")
        return lines

    def scenario_hash(self):
        """Hash of everything except the winch enable flag (A/B pairing)."""
        text = "\n".join(self.kv_lines(include_winches=False))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def config_hash(self):
        text = "\n".join(self.kv_lines(include_winches=True))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_SCALAR_FIELDS = {
    "duration": float,
    "dt": float,
    "seed": int,
    "platform_z": float,
    "kp_pos": float,
    "kp_orn": float,
    "kp_com": float,
    "kd_pos": float,
    "kd_orn": float,
    "kd_com": float,
    "kd_elbow": float,
    "kd_com_vertical": float,
    "kp_com_vertical": float,
    "zeta": float,
    "adm_mass": float,
    "adm_damping": float,
    "planar_drop": float,
    "planar_spring_k": float,
    "state_bound": float,
}
_LIST_FIELDS = ("arm_home", "planar_torque_amp", "planar_torque_freq")


def load_scenario(path):
    """Parse and validate a scenario file; raises SchemaError listing every
    offending field with its line."""
    entries, problems = parse_kv_file(path)
    kw = {}
    waypoints = []
    payloads = []
    for lineno, key, value in entries:
        try:
            if key == "name":
                kw["name"] = value
            elif key == "tier":
                kw["tier"] = value
            elif key == "winches":
                if value not in ("on", "off"):
                    problems.append(f"line {lineno}: winches: expected on|off, got {value!r}")
                else:
                    kw["winches"] = value == "on"
            elif key == "start_centered":
                kw["start_centered"] = value.lower() in ("true", "1", "yes", "on")
            elif key == "params":
                kw["params_file"] = value
            elif key in _SCALAR_FIELDS:
                kw[key] = _SCALAR_FIELDS[key](value)
            elif key in _LIST_FIELDS:
                kw[key] = tuple(float(x) for x in value.split())
            elif key == "waypoint":
                vals = [float(x) for x in value.split()]
                if len(vals) != 4:
                    problems.append(f"line {lineno}: waypoint: expected 't dx dy dz'")
                else:
                    waypoints.append(tuple(vals))
            elif key == "payload":
                vals = [float(x) for x in value.split()]
                if len(vals) != 2:
                    problems.append(f"line {lineno}: payload: expected 't mass'")
                else:
                    payloads.append(tuple(vals))
            else:
                problems.append(f"line {lineno}: unknown key {key!r}")
        except ValueError:
            problems.append(f"line {lineno}: {key}: invalid value {value!r}")
    for req in ("name", "duration", "dt"):
        if req not in kw:
            problems.append(f"missing required key: {req}")
    if problems:
        raise SchemaError(path, problems)
    sc = Scenario(waypoints=tuple(waypoints), payload_events=tuple(sorted(payloads)), **kw)
    problems = sc.validate()
    if problems:
        raise SchemaError(path, problems)
    return sc


def scenario_params(sc: Scenario, base_dir="."):
    if sc.params_file:
        return load_params(os.path.join(base_dir, sc.params_file))
    return default_params() if sc.tier == "3d" else default_planar_params()


# -- trajectory scripting -------------------------------------------------------

def _min_jerk(s):
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


class OffsetSchedule:
    """Piecewise minimum-jerk interpolation through timed offsets."""

    def __init__(self, waypoints):
        self.knots = [(t, np.array([dx, dy, dz])) for t, dx, dy, dz in waypoints]

    def __call__(self, t):
        if not self.knots:
            return np.zeros(3)
        if t <= self.knots[0][0]:
            return self.knots[0][1]
        for (t0, p0), (t1, p1) in zip(self.knots, self.knots[1:]):
            if t <= t1:
                s = (t - t0) / (t1 - t0)
                return p0 + _min_jerk(s) * (p1 - p0)
        return self.knots[-1][1]


def payload_at(events, t):
    mass = 0.0
    for te, m in events:
        if t >= te:
            mass = m
    return mass


# -- logging --------------------------------------------------------------------

@dataclass
class ScenarioLog:
    header: dict
    data: np.ndarray  # (N+1, len(COLUMNS))
    summary: dict = field(default_factory=dict)

    def column(self, name):
        return self.data[:, COLUMNS.index(name)]

    def recompute_summary(self):
        return summarize(self.data)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# winchsim-log v1\n")
            for key in sorted(self.header):
                fh.write(f"# {key}={self.header[key]}\n")
            fh.write(",".join(COLUMNS) + "\n")
            for row in self.data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        header = {}
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("#"):
                    body = line[1:].strip()
                    if "=" in body:
                        k, v = body.split("=", 1)
                        header[k.strip()] = v.strip()
                    continue
                if line.startswith("t,"):
                    continue
                if line:
                    rows.append([float(x) for x in line.split(",")])
        data = np.array(rows, dtype=float)
        log = cls(header=header, data=data)
        log.summary = log.recompute_summary()
        return log


def summarize(data):
    """Deterministic summary statistics from the record matrix."""
    t = data[:, 0]
    com_x = data[:, COLUMNS.index("com_x")]
    com_y = data[:, COLUMNS.index("com_y")]
    ee = data[:, COLUMNS.index("ee_x") : COLUMNS.index("ee_x") + 3]
    ee_des = data[:, COLUMNS.index("ee_des_x") : COLUMNS.index("ee_des_x") + 3]
    err = ee - ee_des
    duration = float(t[-1]) if len(t) else 0.0
    window = min(STEADY_WINDOW, duration)
    steady = t >= duration - window
    return {
        "max_abs_com_x": float(np.max(np.abs(com_x))),
        "max_abs_com_y": float(np.max(np.abs(com_y))),
        "rmse_com_horizontal": float(np.sqrt(np.mean(com_x**2 + com_y**2))),
        "rms_task1_pos_error": float(np.sqrt(np.mean(np.sum(err**2, axis=1)))),
        "steady_com_x": float(np.mean(com_x[steady])),
        "steady_com_y": float(np.mean(com_y[steady])),
    }


# -- scenario execution -----------------------------------------------------------

def run_scenario(sc: Scenario, base_dir=".") -> ScenarioLog:
    """Run one scenario deterministically and return the full log.

    Divergence and cable infeasibility raise with the simulation timestamp in
    the message.
    """
    problems = sc.validate()
    if problems:
        raise SchemaError(sc.name, problems)
    params = scenario_params(sc, base_dir)
    if sc.tier == "3d":
        data = _run_3d(sc, params)
    else:
        data = _run_planar(sc, params)
    header = {
        "name": sc.name,
        "tier": sc.tier,
        "winches": "on" if sc.winches else "off",
        "dt": repr(sc.dt),
        "duration": repr(sc.duration),
        "scenario_hash": sc.scenario_hash(),
        "config_hash": sc.config_hash(),
    }
    log = ScenarioLog(header=header, data=data)
    log.summary = log.recompute_summary()
    return log


def _run_3d(sc: Scenario, params):
    model = ReducedModel(params)
    m = params.n_arm
    if len(sc.arm_home) != m:
        raise SchemaError(sc.name, [f"arm_home: expected {m} joint values"])
    wparams = WinchParams()
    adm = AdmittanceParams(M=sc.adm_mass * np.eye(3), D=sc.adm_damping * np.eye(3))

    qm = np.array(sc.arm_home, dtype=float)
    qmd = np.zeros(m)
    payload0 = payload_at(sc.payload_events, 0.0)
    xp0 = np.array([0.0, 0.0, sc.platform_z])
    if sc.start_centered:
        kin = model.arm.chain(qm)
        m_below, com_arm = model.arm.weighted_com(kin, payload0)
        off = (m_below / (params.platform_mass + m_below)) * (params.arm_mount + com_arm)
        xp0[:2] = -off[:2]
    lengths0 = cable_ik(xp0, params)
    winch_state = WinchState.at_rest(lengths0)
    adm_state = AdmittanceState(x=xp0.copy(), v=np.zeros(3))
    xp_meas = xp0.copy()
    if sc.winches:
        eff_model = EffectiveInertiaModel(model, adm.M)
        platform_damping = adm.D
    else:
        # parked platform: the limit of an arbitrarily heavy effective block
        eff_model = EffectiveInertiaModel(model, 1e6 * np.eye(3))
        platform_damping = np.zeros((3, 3))

    ee0_pos, ee0_quat = model.kin.fk_end_effector(np.concatenate([xp0, qm]))
    com_z0 = float(model.kin.fk_com(np.concatenate([xp0, qm]), payload0)[2])
    schedule = OffsetSchedule(sc.waypoints)

    nsteps = int(round(sc.duration / sc.dt)) if sc.duration > 0 else 0
    data = np.zeros((nsteps + 1, len(COLUMNS)))

    for i in range(nsteps + 1):
        t = i * sc.dt
        payload = payload_at(sc.payload_events, t)
        gamma = np.concatenate([adm_state.x, qm])
        gammadot = np.concatenate([adm_state.v, qmd])
        if not np.all(np.isfinite(gammadot)) or np.max(np.abs(gammadot)) > sc.state_bound:
            raise DivergenceError(t, "model rates out of bounds")
        ev = model.eval(gamma, gammadot, payload)
        # The hierarchy for the coupled loop is built on the inertia the
        # torques actually drive: admittance platform block plus the
        # (coupling-compensated) arm block.  The reduced inertia would route
        # vertical task motion through the arm, which the winches should do.
        Jbar_dot = extended_jacobian_rate(eff_model, gamma, gammadot, payload)
        M_eff, C_eff = eff_model.effective_terms(ev, platform_damping)
        hier = build_hierarchy(gamma, M_eff, ev.J1, ev.J2, ev.J3,
                               C=C_eff, Jbar_dot=Jbar_dot)
        targets = TaskTargets(
            x_e_des_pos=ee0_pos + schedule(t),
            x_e_des_quat=ee0_quat,
            K_P1=np.diag([sc.kp_pos] * 3 + [sc.kp_orn] * 3),
            K_D1=np.diag([sc.kd_pos] * 3 + [sc.kd_orn] * 3) if sc.kd_pos > 0 else None,
            K_P2=sc.kp_com * np.eye(2),
            K_D2=sc.kd_com * np.eye(2) if sc.kd_com > 0 else None,
            kd_com_vertical=sc.kd_com_vertical,
            kp_com_vertical=sc.kp_com_vertical,
            com_z_des=com_z0,
            K_D3=sc.kd_elbow,
            zeta=sc.zeta,
        )
        out = control_law(ev, hier, targets)
        if sc.winches:
            xp_ddot = admittance_accel(out.tau_p, adm_state, adm)
            tau_m_cmd = out.tau_m + coupling_removal(ev, xp_ddot, adm_state.v)
        else:
            xp_ddot = np.zeros(3)
            tau_m_cmd = out.tau_m

        k_pend = model.pendulum_stiffness(payload)
        energy = float(
            0.5 * qmd @ ev.M_m @ qmd
            + 0.5 * adm_state.v @ adm.M @ adm_state.v
            + ev.v_arm
            + 0.5 * k_pend * (ev.com[0] ** 2 + ev.com[1] ** 2)
        )
        row = np.concatenate(
            [
                [t],
                ev.ee_pos,
                targets.x_e_des_pos,
                ev.com,
                xp_meas,
                adm_state.x,
                winch_state.lengths,
                out.tau_p,
                np.pad(tau_m_cmd, (0, 7 - m)),
                [energy, float(np.linalg.norm(xp_meas - adm_state.x))],
            ]
        )
        data[i] = row
        if i == nsteps:
            break

        # manipulator substep: coupled-dynamics row with terms frozen over dt
        qm, qmd = _arm_substep(ev, tau_m_cmd, adm_state.v, xp_ddot, qm, qmd, sc.dt)
        if sc.winches:
            adm_state = admittance_update(out.tau_p, adm_state, adm, sc.dt)
            try:
                l_des = cable_ik(adm_state.x, params)
            except CableRangeError as e:
                raise DivergenceError(t + sc.dt, f"commanded platform infeasible: {e}")
            winch_state = servo_track(l_des, winch_state, params, wparams, sc.dt)
            xp_meas = cable_fk(winch_state.lengths, params)
    return data


def _arm_substep(ev, tau_m, xp_dot, xp_ddot, qm, qmd, dt):
    """RK4 on the arm block with inertia/Coriolis terms frozen over the step.

    With frozen matrices the arm row is linear in the joint rates, so the
    stages need no dynamics re-evaluation; at 1 kHz the freezing error is far
    below the servo-level approximations already made.
    """
    m = qm.size
    rhs_const = tau_m - ev.g_m - ev.M_pm @ xp_ddot - ev.C_pm @ xp_dot
    sol = np.linalg.solve(ev.M_m, np.column_stack([rhs_const, ev.C_m]))
    Minv_rhs = sol[:, 0]
    A = sol[:, 1:]

    def f(_, y):
        qd = y[m:]
        return np.concatenate([qd, Minv_rhs - A @ qd])

    y = np.concatenate([qm, qmd])
    from .geometry import rk4_step

    y = rk4_step(f, 0.0, y, dt)
    return y[:m], y[m:]


def _run_planar(sc: Scenario, params):
    model = PlanarModel(params)
    yc = -params.l1 - sc.planar_drop
    q0 = model.q_from_platform(0.0, 0.0, 0.0, yc, np.zeros(model.m))
    model.winch_spring = (q0[IDX_Q3], q0[IDX_Q6], sc.planar_spring_k)
    amp = np.zeros(model.m)
    frq = np.zeros(model.m)
    for k in range(min(model.m, len(sc.planar_torque_amp))):
        amp[k] = sc.planar_torque_amp[k]
    for k in range(min(model.m, len(sc.planar_torque_freq))):
        frq[k] = sc.planar_torque_freq[k]

    def tau_fn(t, q, qd):
        tau = np.zeros(model.n)
        tau[6:] = amp * np.sin(2.0 * np.pi * frq * t)
        return tau

    traj = model.simulate_closed(
        q0, np.zeros(model.n), tau_fn, sc.dt, sc.duration, state_bound=sc.state_bound
    )
    nrec = traj.t.size
    data = np.zeros((nrec, len(COLUMNS)))
    ee0 = model.ee_position(q0)
    for i in range(nrec):
        q = traj.q[i]
        ee = model.ee_position(q)
        com = model.com_position(q)
        c = model.platform_center(q)
        tau = tau_fn(traj.t[i], q, traj.qdot[i])
        row = np.concatenate(
            [
                [traj.t[i]],
                [ee[0], ee[1], 0.0],
                [ee0[0], ee0[1], 0.0],
                [com[0], com[1], 0.0],
                [c[0], c[1], 0.0],
                [c[0], c[1], 0.0],
                [q[IDX_Q3], q[IDX_Q6], 0.0],
                [0.0, 0.0, 0.0],
                np.pad(tau[6:], (0, 7 - model.m)),
                [traj.energy[i], traj.residual[i]],
            ]
        )
        data[i] = row
    return data


# -- output emission ---------------------------------------------------------------

def emit_outputs(log: ScenarioLog, out_dir):
    """Write <name>.csv, <name>_summary.json and <name>_plot.gp; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    name = log.header["name"]
    csv_path = os.path.join(out_dir, f"{name}.csv")
    log.to_csv(csv_path)
    summary_path = os.path.join(out_dir, f"{name}_summary.json")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(log.summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    plot_path = os.path.join(out_dir, f"{name}_plot.gp")
    with open(plot_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_plot_script(name))
    return {"csv": csv_path, "summary": summary_path, "plot": plot_path}


def _col(name):
    return COLUMNS.index(name) + 1  # gnuplot columns are 1-based


def _plot_script(name):
    return f"""# gnuplot script regenerating the experiment panels from {name}.csv
# usage: gnuplot {name}_plot.gp
set datafile separator ","
set terminal pngcairo size 1200,900
set output "{name}.png"
set multiplot layout 2,2 title "{name}"
set grid
set xlabel "t [s]"
set ylabel "end-effector [m]"
plot "{name}.csv" using 1:{_col('ee_x')} with lines title "x_e", \\
     "" using 1:{_col('ee_des_x')} with lines dt 2 title "x_e des", \\
     "" using 1:{_col('ee_z')} with lines title "z_e", \\
     "" using 1:{_col('ee_des_z')} with lines dt 2 title "z_e des"
set ylabel "horizontal COM [mm]"
plot "{name}.csv" using 1:(${_col('com_x')}*1000) with lines title "x_com", \\
     "" using 1:(${_col('com_y')}*1000) with lines title "y_com"
set ylabel "platform displacement [m]"
plot "{name}.csv" using 1:{_col('xp_x')} with lines title "x_p measured", \\
     "" using 1:{_col('xp_des_x')} with lines dt 2 title "x_p command", \\
     "" using 1:{_col('xp_y')} with lines title "y_p measured", \\
     "" using 1:{_col('xp_des_y')} with lines dt 2 title "y_p command"
set ylabel "cable lengths [m]"
plot "{name}.csv" using 1:{_col('l1')} with lines title "l_1", \\
     "" using 1:{_col('l2')} with lines title "l_2", \\
     "" using 1:{_col('l3')} with lines title "l_3"
unset multiplot
"""
