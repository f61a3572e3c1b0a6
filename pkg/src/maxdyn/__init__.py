"""Maximal-coordinate multibody dynamics.

Each rigid body carries a full 6-DoF state; joints, contacts, and friction
appear as explicit algebraic constraints. Time stepping uses a first-order
variational integrator whose implicit equations are solved per step by an
interior-point Newton method with a graph-ordered sparse block-LDU
factorization.
"""

from . import quaternion
from .errors import (
    AngularVelocityOverflowError,
    ConvergenceError,
    DegenerateAxisError,
    InfeasiblePointError,
    InvalidQuaternionError,
    LineSearchError,
    MaxdynError,
    MechanismFileError,
    ModelError,
    SingularSystemError,
)

__all__ = [
    "quaternion",
    "MaxdynError",
    "InvalidQuaternionError",
    "AngularVelocityOverflowError",
    "DegenerateAxisError",
    "ModelError",
    "MechanismFileError",
    "SingularSystemError",
    "InfeasiblePointError",
    "LineSearchError",
    "ConvergenceError",
]
