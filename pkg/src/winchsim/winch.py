"""Position-controlled winch servos for the three rigging cables.

Each servo tracks a commanded cable length with first-order high-gain
dynamics plus a slew-rate limit.  Commands outside the calibrated length
range are clamped and the affected motor is flagged as paused at its limit,
mirroring the optical limit interlock of the hardware; the bounds are
inclusive.  Time constant and rate limit defaults are estimates for a
geared DC servo of this size, not published values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import cable_lengths


@dataclass(frozen=True)
class WinchParams:
    servo_tau: float = 0.02      # closed-loop time constant [s]
    rate_max: float | None = 0.2  # cable speed limit [m/s]; None disables


@dataclass(frozen=True)
class WinchState:
    lengths: np.ndarray
    rates: np.ndarray
    limit_flags: tuple

    def __post_init__(self):
        l = np.array(self.lengths, dtype=float).reshape(3)
        r = np.array(self.rates, dtype=float).reshape(3)
        l.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "lengths", l)
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "limit_flags", tuple(bool(b) for b in self.limit_flags))

    @classmethod
    def at_rest(cls, lengths):
        return cls(lengths=lengths, rates=np.zeros(3), limit_flags=(False,) * 3)


def _servo_axis(l, l_cmd, tau, rate_max, dt):
    """Exact one-axis update: slew phase (if saturated) then exponential."""
    err = l_cmd - l
    if rate_max is not None and abs(err) / tau > rate_max:
        sgn = 1.0 if err > 0 else -1.0
        t_slew = (abs(err) - tau * rate_max) / rate_max
        if t_slew >= dt:
            return l + sgn * rate_max * dt, sgn * rate_max
        l = l + sgn * rate_max * t_slew
        dt = dt - t_slew
        err = l_cmd - l
    err_end = err * np.exp(-dt / tau)
    return l_cmd - err_end, err_end / tau


def servo_track(l_des, state: WinchState, params, wp: WinchParams, dt) -> WinchState:
    """Advance the three servos one step toward the commanded lengths.

    Commands are clamped to [cable_length_min, cable_length_max]; a command
    beyond a bound pauses that motor at the bound and raises its limit flag.
    Limits are behavior, not faults.
    """
    l_des = np.asarray(l_des, dtype=float)
    lo, hi = params.cable_length_min, params.cable_length_max
    l_cmd = np.clip(l_des, lo, hi)
    flags = tuple(bool(b) for b in (l_des < lo) | (l_des > hi))
    lengths = np.empty(3)
    rates = np.empty(3)
    for i in range(3):
        lengths[i], rates[i] = _servo_axis(
            state.lengths[i], l_cmd[i], wp.servo_tau, wp.rate_max, dt
        )
    lengths = np.clip(lengths, lo, hi)
    return WinchState(lengths=lengths, rates=rates, limit_flags=flags)


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    violations: tuple = field(default_factory=tuple)

    def __str__(self):
        if self.ok:
            return "feasible"
        parts = ", ".join(
            f"cable {i}: {l:.4f} m outside [{lo}, {hi}] m" for i, l, lo, hi in self.violations
        )
        return f"infeasible: {parts}"


def feasibility_report(x_p_des, params) -> FeasibilityReport:
    """Report which cables would leave their range for a platform target.

    Bounds are inclusive: a cable exactly at 0.5 or 1.3 m is feasible.
    """
    l = cable_lengths(x_p_des, params)
    lo, hi = params.cable_length_min, params.cable_length_max
    bad = tuple(
        (i + 1, float(l[i]), lo, hi) for i in range(3) if not (lo <= l[i] <= hi)
    )
    return FeasibilityReport(ok=not bad, violations=bad)
