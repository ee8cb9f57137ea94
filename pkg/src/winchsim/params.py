"""Physical parameters, gain sets, and the parameter file loader.

The platform/arm geometry below is a plausible default set for a suspended
manipulation platform with a redundant 7-joint arm; none of the numeric
values besides the cable length range [0.5, 1.3] m, the admittance gains
(0.8, 1.6), and g = 9.81 come from published hardware data.  Everything is
overridable through a key/value parameter file (see ``load_params``).

Conventions: SI units, angles in radians.  The 3D control tier uses an
inertial frame at the cable suspension point with z up and gravity along -z;
the planar validation tier uses x horizontal, y up, gravity along -y.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import json

import numpy as np

CABLE_LENGTH_MIN = 0.5
CABLE_LENGTH_MAX = 1.3


def _ro(a, shape=None):
    """Copy to a read-only float array (value-object hygiene)."""
    a = np.array(a, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ArmLink:
    """One joint+link of the serial arm.

    axis    : rotation axis, unit vector in the frame of the preceding link
    offset  : joint origin relative to the preceding joint, in the preceding
              link frame (the preceding link's length vector)
    mass    : link mass [kg]
    com     : link center of mass in the link's own frame [m]
    inertia : 3x3 link inertia about its COM, link frame [kg m^2]
    """

    axis: np.ndarray
    offset: np.ndarray
    mass: float
    com: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "axis", _ro(self.axis, (3,)))
        object.__setattr__(self, "offset", _ro(self.offset, (3,)))
        object.__setattr__(self, "com", _ro(self.com, (3,)))
        inertia = np.array(self.inertia, dtype=float)
        if inertia.shape == (3,):
            inertia = np.diag(inertia)
        object.__setattr__(self, "inertia", _ro(inertia, (3, 3)))

    def to_dict(self):
        return {
            "axis": self.axis.tolist(),
            "offset": self.offset.tolist(),
            "mass": self.mass,
            "com": self.com.tolist(),
            "inertia": self.inertia.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["axis"], d["offset"], d["mass"], d["com"], d["inertia"])


@dataclass(frozen=True)
class SystemParams:
    """All geometric and inertial constants of the suspended system.

    l1              : length of the crane chain between the carrier and
                      the hook [m]
    hook_mass       : mass concentrated at the hook [kg]
    platform_mass   : platform mass [kg]
    platform_inertia: 3x3 platform inertia, principal axes [kg m^2]
    cable_attach    : 3x3, row i is the attachment point of cable i on the
                      platform, relative to the platform center [m]
    arm_mount       : arm mount point relative to the platform center [m]
    arm_links       : serial chain description (m joints)
    ee_offset       : end-effector point in the last link frame [m]
    cable_tip_mass  : small fitting mass carried at each cable's platform-side
                      end [m]; keeps the cut-open planar tree inertia positive
                      definite (a real termination fitting has such a mass)
    """

    l1: float = 8.0
    hook_mass: float = 10.0
    platform_mass: float = 60.0
    platform_inertia: np.ndarray = field(default_factory=lambda: np.diag([8.0, 8.0, 12.0]))
    cable_attach: np.ndarray = field(
        default_factory=lambda: np.array(
            [
                [0.0, 0.4, 0.15],
                [-0.34641016151377546, -0.2, 0.15],
                [0.34641016151377546, -0.2, 0.15],
            ]
        )
    )
    arm_mount: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -0.25]))
    arm_links: tuple = ()
    ee_offset: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -0.10]))
    cable_length_min: float = CABLE_LENGTH_MIN
    cable_length_max: float = CABLE_LENGTH_MAX
    gravity: float = 9.81
    cable_tip_mass: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "platform_inertia", _ro(self.platform_inertia, (3, 3)))
        object.__setattr__(self, "cable_attach", _ro(self.cable_attach, (3, 3)))
        object.__setattr__(self, "arm_mount", _ro(self.arm_mount, (3,)))
        object.__setattr__(self, "ee_offset", _ro(self.ee_offset, (3,)))
        object.__setattr__(self, "arm_links", tuple(self.arm_links))

    @property
    def n_arm(self):
        return len(self.arm_links)

    @property
    def arm_mass(self):
        return float(sum(l.mass for l in self.arm_links))

    def suspended_mass(self, payload_mass=0.0):
        """Mass hanging below the hook (platform + arm + payload)."""
        return self.platform_mass + self.arm_mass + payload_mass

    def to_dict(self):
        return {
            "l1": self.l1,
            "hook_mass": self.hook_mass,
            "platform_mass": self.platform_mass,
            "platform_inertia": self.platform_inertia.tolist(),
            "cable_attach": self.cable_attach.tolist(),
            "arm_mount": self.arm_mount.tolist(),
            "arm_links": [l.to_dict() for l in self.arm_links],
            "ee_offset": self.ee_offset.tolist(),
            "cable_length_min": self.cable_length_min,
            "cable_length_max": self.cable_length_max,
            "gravity": self.gravity,
            "cable_tip_mass": self.cable_tip_mass,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["arm_links"] = tuple(ArmLink.from_dict(x) for x in d["arm_links"])
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def default_arm_links():
    """7-joint redundant arm, roll/pitch alternating, hanging along -z.

    Masses and lengths are plausible for a ~14 kg, ~1.1 m reach arm; they are
    implementer-chosen defaults, not identified hardware values.
    """
    z = [0.0, 0.0, 1.0]
    y = [0.0, 1.0, 0.0]

    def link(axis, drop, mass, com_drop, ixy, iz):
        return ArmLink(
            axis=axis,
            offset=[0.0, 0.0, -drop],
            mass=mass,
            com=[0.0, 0.0, -com_drop],
            inertia=[ixy, ixy, iz],
        )

    return (
        link(z, 0.00, 2.9, 0.10, 0.020, 0.008),
        link(y, 0.20, 2.9, 0.10, 0.020, 0.008),
        link(z, 0.20, 2.5, 0.10, 0.018, 0.007),
        link(y, 0.20, 2.5, 0.10, 0.018, 0.007),
        link(z, 0.20, 1.7, 0.08, 0.010, 0.004),
        link(y, 0.15, 1.6, 0.05, 0.008, 0.003),
        link(z, 0.10, 0.3, 0.03, 0.001, 0.0005),
    )


def planar_arm_links():
    """Two-link planar arm used by the planar validation tier.

    Axes are the out-of-plane z axis; offsets/coms live in the x-y plane with
    y the planar vertical, so links hang along -y at zero joint angles.
    """
    return (
        ArmLink(
            axis=[0.0, 0.0, 1.0],
            offset=[0.0, 0.0, 0.0],
            mass=5.0,
            com=[0.0, -0.2, 0.0],
            inertia=[0.0, 0.0, 5.0 * 0.4**2 / 12.0],
        ),
        ArmLink(
            axis=[0.0, 0.0, 1.0],
            offset=[0.0, -0.4, 0.0],
            mass=4.0,
            com=[0.0, -0.175, 0.0],
            inertia=[0.0, 0.0, 4.0 * 0.35**2 / 12.0],
        ),
    )


def default_params():
    """Default parameter set for the 3D control tier (7-joint arm)."""
    return SystemParams(arm_links=default_arm_links())


def default_planar_params():
    """Default parameter set for the planar validation tier (2-joint arm)."""
    return SystemParams(
        arm_links=planar_arm_links(),
        ee_offset=np.array([0.0, -0.35, 0.0]),
    )


def validate_params(p: SystemParams):
    """Check every invariant; returns a list of violation strings (empty = ok).

    Violations are reported, not raised, so callers can surface all of them
    at once.
    """
    errs = []
    for name in ("l1", "hook_mass", "platform_mass", "gravity"):
        if not getattr(p, name) > 0:
            errs.append(f"{name}: must be strictly positive")
    if not p.cable_tip_mass >= 0:
        errs.append("cable_tip_mass: must be non-negative")

    I = p.platform_inertia
    if not np.allclose(I, I.T, atol=1e-12):
        errs.append("platform_inertia: not symmetric")
    elif np.any(np.linalg.eigvalsh(0.5 * (I + I.T)) <= 0):
        errs.append("platform_inertia: not positive definite")

    if not p.cable_length_min < p.cable_length_max:
        errs.append(
            "cable_length_min/cable_length_max: length ordering violated "
            f"({p.cable_length_min} >= {p.cable_length_max})"
        )
    if p.cable_length_min <= 0:
        errs.append("cable_length_min: must be strictly positive")

    a = p.cable_attach
    span = np.cross(a[1] - a[0], a[2] - a[0])
    if np.linalg.norm(span) < 1e-9:
        errs.append("cable_attach: attachment degenerate (points collinear)")

    if len(p.arm_links) == 0:
        errs.append("arm_links: at least one joint required")
    for j, link in enumerate(p.arm_links, start=1):
        if not link.mass > 0:
            errs.append(f"arm_links[{j}].mass: must be strictly positive")
        if abs(np.linalg.norm(link.axis) - 1.0) > 1e-9:
            errs.append(f"arm_links[{j}].axis: not a unit vector")
        Ij = link.inertia
        if not np.allclose(Ij, Ij.T, atol=1e-12):
            errs.append(f"arm_links[{j}].inertia: not symmetric")
        elif np.any(np.linalg.eigvalsh(0.5 * (Ij + Ij.T)) < 0):
            errs.append(f"arm_links[{j}].inertia: negative eigenvalue")
    return errs


# -- parameter file -----------------------------------------------------------
#
# Plain "key = value" text, '#' comments.  Vector values are space-separated
# floats.  Keys:
#   l1, hook_mass, platform_mass, gravity, cable_length_min, cable_length_max,
#   cable_tip_mass                      scalar
#   platform_inertia                    3 floats (diagonal)
#   cable_attach_1 .. cable_attach_3    3 floats each
#   arm_mount, ee_offset                3 floats
#   arm_link                            repeated; 13 floats:
#                                       axis(3) offset(3) mass com(3) inertia_diag(3)

_SCALAR_KEYS = (
    "l1",
    "hook_mass",
    "platform_mass",
    "gravity",
    "cable_length_min",
    "cable_length_max",
    "cable_tip_mass",
)
_VEC3_KEYS = ("platform_inertia", "arm_mount", "ee_offset",
              "cable_attach_1", "cable_attach_2", "cable_attach_3")


def parse_kv_file(path):
    """Parse a key/value file into [(lineno, key, value_string)] entries."""
    entries = []
    problems = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                problems.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
                continue
            key, value = line.split("=", 1)
            entries.append((lineno, key.strip(), value.strip()))
    return entries, problems


def _floats(value, n, key, lineno, problems):
    parts = value.split()
    try:
        vals = [float(x) for x in parts]
    except ValueError:
        problems.append(f"line {lineno}: {key}: non-numeric value {value!r}")
        return None
    if n is not None and len(vals) != n:
        problems.append(f"line {lineno}: {key}: expected {n} numbers, got {len(vals)}")
        return None
    return vals


def load_params(path):
    """Load a SystemParams from a key/value file; raises SchemaError on problems."""
    from .errors import SchemaError

    entries, problems = parse_kv_file(path)
    base = default_params()
    scalars = {}
    vectors = {}
    links = []
    for lineno, key, value in entries:
        if key in _SCALAR_KEYS:
            vals = _floats(value, 1, key, lineno, problems)
            if vals is not None:
                scalars[key] = vals[0]
        elif key in _VEC3_KEYS:
            vals = _floats(value, 3, key, lineno, problems)
            if vals is not None:
                vectors[key] = vals
        elif key == "arm_link":
            vals = _floats(value, 13, key, lineno, problems)
            if vals is not None:
                links.append(
                    ArmLink(
                        axis=vals[0:3],
                        offset=vals[3:6],
                        mass=vals[6],
                        com=vals[7:10],
                        inertia=vals[10:13],
                    )
                )
        else:
            problems.append(f"line {lineno}: unknown key {key!r}")
    if problems:
        raise SchemaError(path, problems)

    kwargs = dict(scalars)
    if "platform_inertia" in vectors:
        kwargs["platform_inertia"] = np.diag(vectors["platform_inertia"])
    if all(f"cable_attach_{i}" in vectors for i in (1, 2, 3)):
        kwargs["cable_attach"] = np.array([vectors[f"cable_attach_{i}"] for i in (1, 2, 3)])
    elif any(f"cable_attach_{i}" in vectors for i in (1, 2, 3)):
        raise SchemaError(path, ["cable_attach_1..3 must be given together"])
    if "arm_mount" in vectors:
        kwargs["arm_mount"] = np.array(vectors["arm_mount"])
    if "ee_offset" in vectors:
        kwargs["ee_offset"] = np.array(vectors["ee_offset"])
    if links:
        kwargs["arm_links"] = tuple(links)
    return replace(base, **kwargs)


# -- controller-facing parameter blocks ---------------------------------------

@dataclass(frozen=True)
class AdmittanceParams:
    """Virtual dynamics rendered by the platform command interface.

    M ddx + D dx = tau_p, with M, D diagonal positive.  Defaults 0.8 / 1.6
    (kg, N s/m) on every axis.
    """

    M: np.ndarray = field(default_factory=lambda: 0.8 * np.eye(3))
    D: np.ndarray = field(default_factory=lambda: 1.6 * np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "M", _ro(self.M, (3, 3)))
        object.__setattr__(self, "D", _ro(self.D, (3, 3)))

    def validate(self):
        errs = []
        for name, mat in (("M", self.M), ("D", self.D)):
            if np.any(mat != np.diag(np.diag(mat))):
                errs.append(f"{name}: must be diagonal")
            if np.any(np.diag(mat) <= 0):
                errs.append(f"{name}: diagonal entries must be strictly positive")
        return errs

    def to_dict(self):
        return {"M": self.M.tolist(), "D": self.D.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["M"]), np.array(d["D"]))


def _spd_errors(name, K, dim):
    errs = []
    K = np.asarray(K, dtype=float)
    if K.shape != (dim, dim):
        errs.append(f"{name}: expected {dim}x{dim}")
        return errs
    if not np.allclose(K, K.T, atol=1e-12):
        errs.append(f"{name}: not symmetric")
    elif np.any(np.linalg.eigvalsh(0.5 * (K + K.T)) <= 0):
        errs.append(f"{name}: not positive definite")
    return errs


@dataclass(frozen=True)
class TaskTargets:
    """Desired task values and impedance gains.

    Task 1 regulates the 6-DOF end-effector pose, task 2 the horizontal
    system COM (target fixed at zero), task 3 injects elbow damping only.
    K_D matrices left as None are critically damped against the task inertia
    at runtime (double diagonalization).  All gain defaults are
    implementer-chosen, not published values.
    """

    x_e_des_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    x_e_des_quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    x_com_des: np.ndarray = field(default_factory=lambda: np.zeros(2))
    K_P1: np.ndarray = field(
        default_factory=lambda: np.diag([500.0] * 3 + [50.0] * 3)
    )
    K_D1: np.ndarray | None = None
    K_P2: np.ndarray = field(default_factory=lambda: 200.0 * np.eye(2))
    K_D2: np.ndarray | None = None
    kd_com_vertical: float = 30.0
    # optional vertical COM anchor: the task definition regulates only the
    # horizontal COM, but on the admittance-coupled plant the vertical
    # platform/arm-extension trade is only damped and can drift; a small
    # spring toward com_z_des pins it.  Zero keeps the plain task behavior.
    kp_com_vertical: float = 0.0
    com_z_des: float = 0.0
    K_D3: float = 4.0
    zeta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "x_e_des_pos", _ro(self.x_e_des_pos, (3,)))
        object.__setattr__(self, "x_e_des_quat", _ro(self.x_e_des_quat, (4,)))
        object.__setattr__(self, "x_com_des", _ro(self.x_com_des, (2,)))
        object.__setattr__(self, "K_P1", _ro(self.K_P1, (6, 6)))
        object.__setattr__(self, "K_P2", _ro(self.K_P2, (2, 2)))
        if self.K_D1 is not None:
            object.__setattr__(self, "K_D1", _ro(self.K_D1, (6, 6)))
        if self.K_D2 is not None:
            object.__setattr__(self, "K_D2", _ro(self.K_D2, (2, 2)))

    def validate(self):
        errs = _spd_errors("K_P1", self.K_P1, 6) + _spd_errors("K_P2", self.K_P2, 2)
        if self.K_D1 is not None:
            errs += _spd_errors("K_D1", self.K_D1, 6)
        if self.K_D2 is not None:
            errs += _spd_errors("K_D2", self.K_D2, 2)
        if self.K_D3 < 0:
            errs.append("K_D3: must be non-negative")
        if self.kd_com_vertical < 0:
            errs.append("kd_com_vertical: must be non-negative")
        return errs
