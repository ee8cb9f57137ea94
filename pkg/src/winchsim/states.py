"""State containers for the three coordinate levels.

Closed-chain coordinates q (planar tier):
    q = [q1, q2, q3, q4, q5, q6, q_m...]
    q1        pendulum angle of the crane chain, from straight down
    q2, q5    cable angles at the hook, from straight down (passive)
    q3, q6    cable lengths (active prismatic)
    q4        platform orientation in the plane
    q_m       arm joint angles
Independent coordinates delta = [q1, q3, q4, q6, q_m] and their serial-chain
counterpart eta = [q1, x_c, q4, y_c, q_m] (platform center position instead
of cable lengths).  Reduced control-tier coordinates
gamma = [x_c, y_c, z_c, q_m...] hold the platform center relative to the hook
plus the arm joints.

All containers are immutable value objects; serialization round-trips
bit-exactly for finite values (floats survive repr/JSON exactly).
"""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np

IDX_Q1, IDX_Q2, IDX_Q3, IDX_Q4, IDX_Q5, IDX_Q6 = range(6)
N_BASE = 6  # pendulum + two cables (angle, length) + platform orientation
DEP_IDX = (IDX_Q2, IDX_Q5)  # constraint-dependent coordinates


def indep_idx(n_arm):
    return (IDX_Q1, IDX_Q3, IDX_Q4, IDX_Q6) + tuple(range(N_BASE, N_BASE + n_arm))


def _ro(a, n=None):
    a = np.array(a, dtype=float).reshape(-1)
    if n is not None and a.size != n:
        raise ValueError(f"expected length {n}, got {a.size}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ClosedChainState:
    """Redundant planar coordinates q in R^(6+m) with velocities."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _ro(self.q))
        object.__setattr__(self, "qdot", _ro(self.qdot, self.q.size))
        if self.q.size < N_BASE + 1:
            raise ValueError("closed-chain state needs at least one arm joint")

    @property
    def n_arm(self):
        return self.q.size - N_BASE

    @property
    def arm(self):
        return self.q[N_BASE:]

    def cable_lengths_in_range(self, p):
        lo, hi = p.cable_length_min, p.cable_length_max
        return bool(lo <= self.q[IDX_Q3] <= hi and lo <= self.q[IDX_Q6] <= hi)

    def to_dict(self):
        return {"q": self.q.tolist(), "qdot": self.qdot.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["q"], d["qdot"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class IndependentState:
    """Constraint-consistent coordinates delta and serial coordinates eta.

    delta and eta are related bijectively through the serial map B wherever
    B is nonsingular (cables not parallel).
    """

    delta: np.ndarray
    eta: np.ndarray
    ddelta: np.ndarray
    deta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", _ro(self.delta))
        n = self.delta.size
        object.__setattr__(self, "eta", _ro(self.eta, n))
        object.__setattr__(self, "ddelta", _ro(self.ddelta, n))
        object.__setattr__(self, "deta", _ro(self.deta, n))

    def to_dict(self):
        return {
            "delta": self.delta.tolist(),
            "eta": self.eta.tolist(),
            "ddelta": self.ddelta.tolist(),
            "deta": self.deta.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["delta"], d["eta"], d["ddelta"], d["deta"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class ReducedState:
    """Control-tier coordinates gamma = [x_p (3), q_m (m)] with rates."""

    gamma: np.ndarray
    gammadot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", _ro(self.gamma))
        object.__setattr__(self, "gammadot", _ro(self.gammadot, self.gamma.size))
        if self.gamma.size < 4:
            raise ValueError("reduced state needs at least one arm joint")

    @property
    def x_p(self):
        return self.gamma[:3]

    @property
    def q_m(self):
        return self.gamma[3:]

    @property
    def xdot_p(self):
        return self.gammadot[:3]

    @property
    def qdot_m(self):
        return self.gammadot[3:]

    def to_dict(self):
        return {"gamma": self.gamma.tolist(), "gammadot": self.gammadot.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["gamma"], d["gammadot"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))
