"""Joints as composed translational/rotational constraints with selection matrices.

Every supported joint pairs a selection matrix D with its nullspace C for
each of the two generic constraint functions: the anchor-offset distance
expressed in the parent frame (translational) and the relative-orientation
vector part (rotational). D^T g are the constraint rows the solver
enforces; C^T g are the joint's minimal coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quaternion as qt
from .bodies import WORLD, BodyState
from .errors import DegenerateAxisError, ModelError

_EMPTY = np.zeros((3, 0))
_EYE = np.eye(3)

# joint name -> (D_T, D_R, C_T, C_R), entries: 'I' identity, 'A' axis (V3),
# 'P' plane (V12), '0' empty
JOINT_TABLE = {
    "fixed": ("I", "I", "0", "0"),
    "prismatic": ("P", "I", "A", "0"),
    "planar-fixed": ("A", "I", "P", "0"),
    "fixed-orientation": ("0", "I", "I", "0"),
    "revolute": ("I", "P", "0", "A"),
    "cylindrical": ("P", "P", "A", "A"),
    "planar-rotating": ("A", "P", "P", "A"),
    "free-rotating": ("0", "P", "I", "A"),
    "spherical": ("I", "0", "0", "I"),
    "cylindrical-free": ("P", "0", "A", "I"),
    "planar-free": ("A", "0", "P", "I"),
    "floating": ("0", "0", "I", "I"),
}

_NEEDS_AXIS = {"A", "P"}


def selection_from_axis(axis):
    """Orthonormal split of R^3 about an axis: (V12, V3) with V3 || axis.

    Computed from the SVD of the axis skew matrix; V3's sign is adjusted so
    it points along the input. V12 spans the plane orthogonal to the axis.
    """
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise DegenerateAxisError("axis has zero length")
    _, _, vt = np.linalg.svd(qt.skew(axis / n))
    v = vt.T
    v12, v3 = v[:, :2], v[:, 2:]
    if float(v3[:, 0] @ (axis / n)) < 0.0:
        v3 = -v3
    return v12, v3


@dataclass
class Joint:
    """Kinematic pairing of a parent (or WORLD) and a child body.

    Anchors are given in the owning body's frame; the rotational offset and
    the axis live in the parent frame.
    """

    parent: int
    child: int
    p_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_b: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q_off: np.ndarray = field(default_factory=lambda: qt.IDENTITY.copy())
    axis: np.ndarray | None = None
    joint_type: str = "spherical"
    D_T: np.ndarray = field(default=None, repr=False)
    D_R: np.ndarray = field(default=None, repr=False)
    C_T: np.ndarray = field(default=None, repr=False)
    C_R: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.joint_type not in JOINT_TABLE:
            raise ModelError(f"unknown joint type {self.joint_type!r}; "
                             f"supported: {sorted(JOINT_TABLE)}")
        if self.parent == self.child:
            raise ModelError("joint must connect two distinct bodies")
        self.p_a = np.asarray(self.p_a, dtype=float)
        self.p_b = np.asarray(self.p_b, dtype=float)
        self.q_off = qt.check_unit(self.q_off)
        spec = JOINT_TABLE[self.joint_type]
        if any(code in _NEEDS_AXIS for code in spec):
            if self.axis is None:
                raise ModelError(f"joint type {self.joint_type!r} requires an axis")
            v12, v3 = selection_from_axis(self.axis)
            self.axis = np.asarray(self.axis, dtype=float)
        else:
            v12, v3 = None, None
        lookup = {"I": _EYE, "0": _EMPTY, "A": v3, "P": v12}
        self.D_T, self.D_R, self.C_T, self.C_R = (lookup[c] for c in spec)

    @property
    def is_world(self):
        return self.parent == WORLD

    @property
    def num_rows(self):
        return self.D_T.shape[1] + self.D_R.shape[1]

    @property
    def num_minimal(self):
        return self.C_T.shape[1] + self.C_R.shape[1]


# ---------------------------------------------------------------------------
# Generic constraint functions and their quaternion Jacobians. `state_a` is
# None for a WORLD parent, which uses x_a = 0 and q_a = identity.

def _rot(state):
    """Body-to-global rotation matrix, reusing a cached one when present."""
    R = getattr(state, "R", None)
    return qt.rotation_matrix(state.q) if R is None else R


def g_translational(state_a, state_b: BodyState, p_a, p_b):
    """Anchor-point offset from parent anchor to child anchor, parent frame."""
    if state_a is None:
        return state_b.x + _rot(state_b) @ p_b - p_a
    delta = state_b.x + _rot(state_b) @ p_b - state_a.x - _rot(state_a) @ p_a
    return _rot(state_a).T @ delta


def g_translational_jacobian(state_a, state_b, p_a, p_b):
    """Jacobians of g_translational: ((dx_a, dq_a), (dx_b, dq_b)); parent None for WORLD."""
    if state_a is None:
        return None, (np.eye(3), qt.rotate_jacobian_q(state_b.q, p_b))
    Ra_T = _rot(state_a).T
    delta = state_b.x + _rot(state_b) @ p_b - state_a.x - _rot(state_a) @ p_a
    dq_a = (qt.rotate_inv_jacobian_q(state_a.q, delta)
            - Ra_T @ qt.rotate_jacobian_q(state_a.q, p_a))
    dq_b = Ra_T @ qt.rotate_jacobian_q(state_b.q, p_b)
    return (-Ra_T, dq_a), (Ra_T, dq_b)


def g_rotational(q_a, q_b, q_off):
    """Vector part of the relative orientation q_a^-1 q_b q_off^-1."""
    rel = qt.mul_raw(q_b, qt.qconj(q_off))
    if q_a is not None:
        rel = qt.mul_raw(qt.qconj(q_a), rel)
    return rel[1:]


def g_rotational_jacobian(q_a, q_b, q_off):
    """Quaternion Jacobians of g_rotational: (dq_a, dq_b); dq_a is None for WORLD."""
    r_off = qt.rmat(qt.qconj(q_off))
    if q_a is None:
        return None, r_off[1:]
    dq_b = (qt.lmat(qt.qconj(q_a)) @ r_off)[1:]
    dq_a = (qt.rmat(r_off @ q_b) @ qt.tmat())[1:]
    return dq_a, dq_b


def joint_residual(joint: Joint, state_a, state_b) -> np.ndarray:
    """Constraint rows [D_T^T g_T ; D_R^T g_R] that must vanish."""
    gt = g_translational(state_a, state_b, joint.p_a, joint.p_b)
    gr = g_rotational(None if state_a is None else state_a.q, state_b.q, joint.q_off)
    return np.concatenate([joint.D_T.T @ gt, joint.D_R.T @ gr])


def joint_minimal_coords(joint: Joint, state_a, state_b) -> np.ndarray:
    """Minimal coordinates [C_T^T g_T ; C_R^T g_R] of the joint."""
    gt = g_translational(state_a, state_b, joint.p_a, joint.p_b)
    gr = g_rotational(None if state_a is None else state_a.q, state_b.q, joint.q_off)
    return np.concatenate([joint.C_T.T @ gt, joint.C_R.T @ gr])


def joint_jacobian(joint: Joint, state_a, state_b):
    """Selected constraint-row Jacobians per body.

    Returns (jac_a, jac_b); each is (d/dx (n_e x 3), d/dq (n_e x 4)), with
    jac_a None for a WORLD parent.
    """
    nt, nr = joint.D_T.shape[1], joint.D_R.shape[1]
    n = nt + nr
    ja_t, jb_t = g_translational_jacobian(state_a, state_b, joint.p_a, joint.p_b)
    ja_r, jb_r = g_rotational_jacobian(
        None if state_a is None else state_a.q, state_b.q, joint.q_off)

    def build(t_part, r_part):
        jx = np.zeros((n, 3))
        jq = np.zeros((n, 4))
        if t_part is not None:
            jx[:nt] = joint.D_T.T @ t_part[0]
            jq[:nt] = joint.D_T.T @ t_part[1]
        if r_part is not None:
            jq[nt:] = joint.D_R.T @ r_part
        return jx, jq

    jac_b = build(jb_t, jb_r)
    jac_a = None if state_a is None else build(ja_t, ja_r)
    return jac_a, jac_b


def equality_jacobian(joint: Joint, state_a, state_b):
    """Constraint-row Jacobians in force form: [d/dx, d/d^r q] per body."""
    jac_a, jac_b = joint_jacobian(joint, state_a, state_b)
    out_a = None
    if jac_a is not None:
        out_a = np.hstack([jac_a[0], qt.rotational_jacobian(jac_a[1], state_a.q)])
    out_b = np.hstack([jac_b[0], qt.rotational_jacobian(jac_b[1], state_b.q)])
    return out_a, out_b


def joint_actuator_wrench(joint: Joint, state_a, state_b, force, torque):
    """Body wrenches of an actuator commanding (force, torque) at a joint.

    The commanded force is global, the commanded torque lives in the parent
    frame. Each wrench is (force in global frame, torque in its own body's
    frame); the parent receives the negated command.
    """
    force = np.asarray(force, dtype=float)
    torque = np.asarray(torque, dtype=float)
    if state_a is None:
        f_b_body = qt.rotate_inv(state_b.q, force)
        tau_b = torque.copy()
    else:
        f_b_body = qt.rotate_inv(state_b.q, force)
        tau_b = qt.rotate_inv(state_b.q, qt.rotate(state_a.q, torque))
    wrench_b = (force, tau_b + qt.cross(joint.p_b, f_b_body))
    if state_a is None:
        wrench_a = (-force, -(torque + qt.cross(joint.p_a, force)))
    else:
        f_a_body = qt.rotate_inv(state_a.q, force)
        wrench_a = (-force, -(torque + qt.cross(joint.p_a, f_a_body)))
    return wrench_a, wrench_b
