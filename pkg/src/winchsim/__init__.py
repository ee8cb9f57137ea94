"""Simulation of a cable-suspended manipulation platform.

Three winch-regulated rigging cables translate a platform hanging from a
crane hook; a redundant serial arm below the platform is torque-controlled.
A hierarchical whole-body impedance controller tracks the end-effector pose
while shifting the system COM under the suspension point, with the
position-controlled winches driven through a virtual admittance and cable
inverse kinematics.
"""

from .params import (
    AdmittanceParams,
    ArmLink,
    SystemParams,
    TaskTargets,
    default_params,
    default_planar_params,
    load_params,
    validate_params,
)
from .states import ClosedChainState, IndependentState, ReducedState

__all__ = [
    "AdmittanceParams",
    "ArmLink",
    "SystemParams",
    "TaskTargets",
    "default_params",
    "default_planar_params",
    "load_params",
    "validate_params",
    "ClosedChainState",
    "IndependentState",
    "ReducedState",
]
