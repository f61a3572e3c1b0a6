"""Force elements: gravity, springs, dampers, joint actuators, external wrenches.

Conservative elements contribute a potential and its configuration
gradient, evaluated at the known configuration of the step. Dampers depend
on the unknown step velocities and therefore also expose wrench Jacobians,
which become velocity-coupling blocks (and graph edges) between the bodies
they connect. Wrenches are (global force, body-frame torque) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quaternion as qt
from .bodies import WORLD
from .errors import ModelError

_Z3 = np.zeros(3)


@dataclass
class Gravity:
    """Uniform gravitational potential -m g.x for one body."""

    body: int
    g: np.ndarray

    def potential(self, mechanism, states):
        b = mechanism.body_index[self.body]
        return -mechanism.bodies[b].mass * float(np.asarray(self.g) @ states[b].x)

    def potential_gradients(self, mechanism, states):
        b = mechanism.body_index[self.body]
        return {self.body: (-mechanism.bodies[b].mass * np.asarray(self.g, dtype=float),
                            np.zeros(4))}


@dataclass
class Spring:
    """Linear spring between two anchor points, quadratic in the anchor offset.

    The potential is k/2 |g_T - rest|^2 with g_T the parent-frame anchor
    offset, so zero displacement from `rest` gives zero force.
    """

    parent: int
    child: int
    p_a: np.ndarray = field(default_factory=lambda: _Z3.copy())
    p_b: np.ndarray = field(default_factory=lambda: _Z3.copy())
    stiffness: float = 0.0
    rest: np.ndarray = field(default_factory=lambda: _Z3.copy())

    def __post_init__(self):
        if self.stiffness < 0.0:
            raise ModelError("spring stiffness must be nonnegative")
        self.p_a = np.asarray(self.p_a, dtype=float)
        self.p_b = np.asarray(self.p_b, dtype=float)
        self.rest = np.asarray(self.rest, dtype=float)

    def _displacement(self, mechanism, states):
        from .joints import g_translational
        state_a = None if self.parent == WORLD else states[mechanism.body_index[self.parent]]
        state_b = states[mechanism.body_index[self.child]]
        return g_translational(state_a, state_b, self.p_a, self.p_b) - self.rest, state_a, state_b

    def potential(self, mechanism, states):
        d, _, _ = self._displacement(mechanism, states)
        return 0.5 * self.stiffness * float(d @ d)

    def potential_gradients(self, mechanism, states):
        from .joints import g_translational_jacobian
        d, state_a, state_b = self._displacement(mechanism, states)
        jac_a, jac_b = g_translational_jacobian(state_a, state_b, self.p_a, self.p_b)
        kd = self.stiffness * d
        grads = {self.child: (jac_b[0].T @ kd, jac_b[1].T @ kd)}
        if jac_a is not None:
            grads[self.parent] = (jac_a[0].T @ kd, jac_a[1].T @ kd)
        return grads


@dataclass
class Damper:
    """Viscous damper opposing relative anchor velocity and relative rotation rate.

    `translational` scales the force against the relative velocity of the
    anchor points (global frame); `rotational` scales the torque against
    the relative angular velocity (each body's own frame). Both act with
    equal and opposite wrenches on the connected bodies.
    """

    parent: int
    child: int
    p_a: np.ndarray = field(default_factory=lambda: _Z3.copy())
    p_b: np.ndarray = field(default_factory=lambda: _Z3.copy())
    translational: float = 0.0
    rotational: float = 0.0

    def __post_init__(self):
        if self.translational < 0.0 or self.rotational < 0.0:
            raise ModelError("damping coefficients must be nonnegative")
        self.p_a = np.asarray(self.p_a, dtype=float)
        self.p_b = np.asarray(self.p_b, dtype=float)

    @property
    def couples_bodies(self):
        return self.parent != WORLD

    def wrenches(self, mechanism, z1, zdot):
        """Damping wrenches per body id, evaluated at step configurations z1
        and candidate velocities zdot (dicts body id -> value)."""
        child, parent = self.child, self.parent
        x_b, q_b = z1[child]
        v_b, w_b = zdot[child]
        R_b = qt.rotation_matrix(q_b)
        if parent == WORLD:
            R_a = np.eye(3)
            v_a, w_a = _Z3, _Z3
        else:
            _, q_a = z1[parent]
            R_a = qt.rotation_matrix(q_a)
            v_a, w_a = zdot[parent]

        out = {}
        f_b = _Z3
        if self.translational > 0.0:
            v_rel = (v_b + R_b @ qt.cross(w_b, self.p_b)
                     - v_a - R_a @ qt.cross(w_a, self.p_a))
            f_b = -self.translational * v_rel
        tau_b = qt.cross(self.p_b, R_b.T @ f_b)
        tau_a = None
        if self.rotational > 0.0:
            w_rel_b = w_b - R_b.T @ (R_a @ w_a)
            tau_b = tau_b - self.rotational * w_rel_b
            if parent != WORLD:
                w_rel_a = w_a - R_a.T @ (R_b @ w_b)
                tau_a = -self.rotational * w_rel_a
        out[child] = (f_b, tau_b)
        if parent != WORLD:
            f_a = -f_b
            if tau_a is None:
                tau_a = _Z3.copy()
            tau_a = tau_a + qt.cross(self.p_a, R_a.T @ f_a)
            out[parent] = (f_a, tau_a)
        return out

    def wrench_jacobians(self, mechanism, z1):
        """d(wrench)/d(v, w) blocks: dict (row body, col body) -> 6x6.

        Row layout is (force, torque); column layout is (v, w) of the
        column body.
        """
        child, parent = self.child, self.parent
        _, q_b = z1[child]
        R_b = qt.rotation_matrix(q_b)
        if parent == WORLD:
            R_a = np.eye(3)
        else:
            _, q_a = z1[parent]
            R_a = qt.rotation_matrix(q_a)

        ids = [child] if parent == WORLD else [child, parent]
        blocks = {(r, c): np.zeros((6, 6)) for r in ids for c in ids}

        if self.translational > 0.0:
            dt_ = self.translational
            # d(v_rel)/d(v_b, w_b, v_a, w_a)
            dvrel = {child: (np.eye(3), -R_b @ qt.skew(self.p_b))}
            if parent != WORLD:
                dvrel[parent] = (-np.eye(3), R_a @ qt.skew(self.p_a))
            lever_b = qt.skew(self.p_b) @ R_b.T
            for col, (dv, dw) in dvrel.items():
                blocks[(child, col)][:3, :3] += -dt_ * dv
                blocks[(child, col)][:3, 3:] += -dt_ * dw
                blocks[(child, col)][3:, :3] += lever_b @ (-dt_ * dv)
                blocks[(child, col)][3:, 3:] += lever_b @ (-dt_ * dw)
                if parent != WORLD:
                    lever_a = qt.skew(self.p_a) @ R_a.T
                    blocks[(parent, col)][:3, :3] += dt_ * dv
                    blocks[(parent, col)][:3, 3:] += dt_ * dw
                    blocks[(parent, col)][3:, :3] += lever_a @ (dt_ * dv)
                    blocks[(parent, col)][3:, 3:] += lever_a @ (dt_ * dw)

        if self.rotational > 0.0:
            dr = self.rotational
            blocks[(child, child)][3:, 3:] += -dr * np.eye(3)
            if parent != WORLD:
                R_ba = R_b.T @ R_a
                blocks[(child, parent)][3:, 3:] += dr * R_ba
                blocks[(parent, parent)][3:, 3:] += -dr * np.eye(3)
                blocks[(parent, child)][3:, 3:] += dr * R_ba.T
        return blocks


@dataclass
class JointActuator:
    """Constant commanded wrench applied at a joint (force global, torque parent frame)."""

    joint: int
    force: np.ndarray = field(default_factory=lambda: _Z3.copy())
    torque: np.ndarray = field(default_factory=lambda: _Z3.copy())

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        self.torque = np.asarray(self.torque, dtype=float)


@dataclass
class ExternalWrench:
    """Constant applied wrench on one body (force global, torque body frame)."""

    body: int
    force: np.ndarray = field(default_factory=lambda: _Z3.copy())
    torque: np.ndarray = field(default_factory=lambda: _Z3.copy())

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        self.torque = np.asarray(self.torque, dtype=float)


def force_element_contribution(element, mechanism, states):
    """Evaluate one element at given states.

    Conservative elements (Gravity, Spring) return
    ('potential', value, {body: (grad_x, grad_q)}); velocity or command
    driven elements return ('wrench', {body: (force, torque)}).
    """
    from .integrator import states_z, states_zdot

    if isinstance(element, (Gravity, Spring)):
        return ("potential",
                element.potential(mechanism, states),
                element.potential_gradients(mechanism, states))
    if isinstance(element, Damper):
        z = states_z(mechanism, states)
        zdot = states_zdot(mechanism, states)
        return ("wrench", element.wrenches(mechanism, z, zdot))
    if isinstance(element, JointActuator):
        from .joints import joint_actuator_wrench
        joint = mechanism.joints[element.joint]
        state_a = (None if joint.is_world
                   else states[mechanism.body_index[joint.parent]])
        state_b = states[mechanism.body_index[joint.child]]
        wrench_a, wrench_b = joint_actuator_wrench(
            joint, state_a, state_b, element.force, element.torque)
        out = {joint.child: wrench_b}
        if not joint.is_world:
            out[joint.parent] = wrench_a
        return ("wrench", out)
    if isinstance(element, ExternalWrench):
        return ("wrench", {element.body: (element.force, element.torque)})
    raise ModelError(f"unknown force element {type(element).__name__}")
