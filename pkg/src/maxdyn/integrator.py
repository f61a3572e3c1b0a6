"""First-order variational time step: implicit residual and analytic Jacobian.

One step from a known state (z0, zdot0) first advances the configuration
to z1, then solves the stacked implicit system for the unknowns

    s = [zdot1 per body, lambda per joint, (gamma, beta, psi, eta) per contact]

whose residual couples the discrete force balance per body, the equality
constraints evaluated at z2(zdot1), and the contact/friction
complementarity conditions in barrier-relaxed product form slack*dual = mu.
Constraint-force directions (G, N, B) are evaluated at the known z1, so
only the body diagonals, the constraint rows at z2, and the
complementarity products change between Newton iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quaternion as qt
from .bodies import BodyState
from .contacts import contact_gap, friction_basis, gap_jacobian
from .errors import InfeasiblePointError
from .forces import Damper, ExternalWrench, Gravity, JointActuator, Spring
from .joints import joint_actuator_wrench, joint_jacobian, joint_residual
from .ldu import BlockSparseMatrix
from .mechanism import Mechanism


class _Conf:
    """Configuration stand-in for BodyState with a cached rotation matrix."""

    __slots__ = ("x", "q", "R")

    def __init__(self, x, q):
        self.x = x
        self.q = q
        self.R = qt.rotation_matrix(q)


def states_z(mechanism, states):
    return {b.id: (states[i].x, states[i].q) for i, b in enumerate(mechanism.bodies)}


def states_zdot(mechanism, states):
    return {b.id: (states[i].v, states[i].w) for i, b in enumerate(mechanism.bodies)}


def advance_configuration(mechanism: Mechanism, states, dt: float):
    """Per-body configuration update: x1 = x0 + v0 dt, q1 from the discrete rotation."""
    return [(s.x + dt * s.v, qt.step_orientation(s.q, s.w, dt)) for s in states]


def d0_translational(body, x0, x1, v1, force, grad_x, dt):
    """Discrete translational force balance, with v0 recovered from (x0, x1)."""
    v0 = (np.asarray(x1) - np.asarray(x0)) / dt
    return body.mass * (np.asarray(v1) - v0) / dt + grad_x - force


def d0_rotational(body, q0, q1, w1, torque, grad_q_rot, dt):
    """Discrete rotational force balance, with w0 recovered from (q0, q1)."""
    w0 = qt.discrete_angvel(q0, q1, dt).omega
    J = body.inertia
    c1 = math.sqrt(max(4.0 / dt**2 - float(w1 @ w1), 0.0))
    c0 = math.sqrt(4.0 / dt**2 - float(w0 @ w0))
    return (J @ w1 * c1 + qt.cross(w1, J @ w1)
            - J @ w0 * c0 + qt.cross(w0, J @ w0)
            + grad_q_rot - 2.0 * torque)


# ---------------------------------------------------------------------------
# Solver layout: one block row/column per graph node (merged supernodes keep
# their members stacked in merge order).

@dataclass
class _JointMember:
    joint: object
    index: int
    offset: int          # row offset inside the node block
    rows: int
    parent: int | None   # body index or None for WORLD
    child: int


@dataclass
class _ContactMember:
    contact: object
    index: int
    offset: int
    dim: int
    body: int
    body_b: int | None


class SolverLayout:
    """Flat-vector layout of the step unknowns and the block structure."""

    def __init__(self, mechanism: Mechanism):
        self.mechanism = mechanism
        self.ordering = mechanism.ordering
        nb = mechanism.num_bodies
        self.node_slices: dict[int, slice] = {}
        self.body_nodes: list[int] = []
        self.members: dict[int, list] = {}
        self.cone_indices: list[int] = []
        self.product_rows: list[int] = []
        self.contact_offsets: dict[int, tuple] = {}  # contact idx -> (node, offset)
        self.joint_offsets: dict[int, tuple] = {}

        joint_node_of = {}
        contact_node_of = {}
        for key, node in self.ordering.nodes.items():
            for member_key in node.members:
                j = member_key - nb
                if 0 <= j < len(mechanism.joints):
                    joint_node_of[j] = key
                else:
                    contact_node_of[j - len(mechanism.joints)] = key

        offset = 0
        for key in sorted(self.ordering.nodes):
            node = self.ordering.nodes[key]
            self.node_slices[key] = slice(offset, offset + node.dim)
            offset += node.dim
            if node.kind == "body":
                self.body_nodes.append(key)
                continue
            plans = []
            local = 0
            for member_key in node.members:
                j = member_key - nb
                if 0 <= j < len(mechanism.joints):
                    joint = mechanism.joints[j]
                    parent = (None if joint.is_world
                              else mechanism.body_index[joint.parent])
                    plans.append(_JointMember(joint, j, local, joint.num_rows,
                                              parent, mechanism.body_index[joint.child]))
                    self.joint_offsets[j] = (key, local)
                    local += joint.num_rows
                else:
                    c = j - len(mechanism.joints)
                    contact = mechanism.contacts[c]
                    body_b = (mechanism.body_index[contact.body_b]
                              if contact.is_pair else None)
                    plans.append(_ContactMember(contact, c, local,
                                                contact.num_unknowns,
                                                mechanism.body_index[contact.body],
                                                body_b))
                    self.contact_offsets[c] = (key, local)
                    base = self.node_slices[key].start + local
                    # every contact unknown is a cone variable or a slack
                    self.cone_indices.extend(range(base, base + contact.num_unknowns))
                    # rows carrying -mu: gamma*s_gap and, with friction,
                    # psi*s_cone and beta*eta
                    self.product_rows.append(base + 1)
                    if contact.has_friction:
                        nf2 = 2 * contact.n_f
                        self.product_rows.append(base + 3 + nf2)
                        self.product_rows.extend(range(base + 4 + nf2,
                                                       base + 4 + 2 * nf2))
                    local += contact.num_unknowns
            self.members[key] = plans
        self.size = offset
        self.cone_indices = np.array(sorted(self.cone_indices), dtype=int)
        self.product_rows = np.array(sorted(self.product_rows), dtype=int)

    def body_slice(self, body_index):
        return self.node_slices[body_index]

    def velocities(self, s):
        """Per-body (v, w) views into a flat unknown vector."""
        out = []
        for i in self.body_nodes:
            sl = self.node_slices[i]
            out.append((s[sl][:3], s[sl][3:]))
        return out

    def pack_states(self, states):
        """Fresh-start unknown vector: body velocities, unit cone variables."""
        s = np.zeros(self.size)
        for i in self.body_nodes:
            sl = self.node_slices[i]
            s[sl.start:sl.start + 3] = states[i].v
            s[sl.start + 3:sl.stop] = states[i].w
        s[self.cone_indices] = 1.0
        return s


class StepContext:
    """Everything about one time step that is fixed during the implicit solve."""

    def __init__(self, mechanism: Mechanism, states, dt: float, layout=None):
        self.mechanism = mechanism
        self.dt = float(dt)
        self.layout = layout or SolverLayout(mechanism)
        self.states0 = states
        self.z1 = advance_configuration(mechanism, states, dt)
        nb = mechanism.num_bodies
        self.L1 = [qt.lmat(q1) for _, q1 in self.z1]
        self.conf1 = [_Conf(x1, q1) for x1, q1 in self.z1]

        # constant rotational history term: -J w0 c0 + w0 x J w0
        self.rot_const = []
        for i, body in enumerate(mechanism.bodies):
            w0 = states[i].w
            c0 = math.sqrt((2.0 / dt) ** 2 - float(w0 @ w0))
            J = body.inertia
            self.rot_const.append(-J @ w0 * c0 + qt.cross(w0, J @ w0))

        # applied wrenches and potential gradients at z1
        self.force_const = [np.zeros(3) for _ in range(nb)]
        self.torque_const = [np.zeros(3) for _ in range(nb)]
        self.grad_x = [np.zeros(3) for _ in range(nb)]
        self.grad_q_rot = [np.zeros(3) for _ in range(nb)]
        self.dampers = []
        grav = mechanism.gravity
        for i, body in enumerate(mechanism.bodies):
            self.grad_x[i] = self.grad_x[i] - body.mass * grav
        for element in mechanism.elements:
            if isinstance(element, Spring):
                for bid, (gx, gq) in element.potential_gradients(
                        mechanism, self.conf1).items():
                    i = mechanism.body_index[bid]
                    self.grad_x[i] = self.grad_x[i] + gx
                    self.grad_q_rot[i] = self.grad_q_rot[i] + qt.rotational_gradient(
                        gq, self.z1[i][1])
            elif isinstance(element, Damper):
                self.dampers.append(element)
            elif isinstance(element, JointActuator):
                joint = mechanism.joints[element.joint]
                conf_a = (None if joint.is_world
                          else self.conf1[mechanism.body_index[joint.parent]])
                conf_b = self.conf1[mechanism.body_index[joint.child]]
                wrench_a, wrench_b = joint_actuator_wrench(
                    joint, conf_a, conf_b, element.force, element.torque)
                i = mechanism.body_index[joint.child]
                self.force_const[i] = self.force_const[i] + wrench_b[0]
                self.torque_const[i] = self.torque_const[i] + wrench_b[1]
                if not joint.is_world:
                    i = mechanism.body_index[joint.parent]
                    self.force_const[i] = self.force_const[i] + wrench_a[0]
                    self.torque_const[i] = self.torque_const[i] + wrench_a[1]
            elif isinstance(element, ExternalWrench):
                i = mechanism.body_index[element.body]
                self.force_const[i] = self.force_const[i] + element.force
                self.torque_const[i] = self.torque_const[i] + element.torque

        # damper wrench Jacobians at z1 (velocity-coupling blocks)
        self.damper_blocks = {}
        z1map = {b.id: self.z1[i] for i, b in enumerate(mechanism.bodies)}
        for damper in self.dampers:
            for (rid, cid), blk in damper.wrench_jacobians(mechanism, z1map).items():
                ri, ci = mechanism.body_index[rid], mechanism.body_index[cid]
                tgt = self.damper_blocks.setdefault((ri, ci), np.zeros((6, 6)))
                tgt[:3] -= blk[:3]
                tgt[3:] -= 2.0 * blk[3:]

        # constraint force directions at z1
        self.joint_force = {}    # (joint idx, body idx) -> 6 x n_e  (= -G^T sign applied later)
        for member in self._joint_members():
            jac_a, jac_b = joint_jacobian(
                member.joint,
                None if member.parent is None else self.conf1[member.parent],
                self.conf1[member.child])
            jx, jq = jac_b
            g6 = np.hstack([jx, qt.rotational_jacobian(jq, self.z1[member.child][1])])
            self.joint_force[(member.index, member.child)] = g6.T
            if member.parent is not None:
                jx, jq = jac_a
                g6 = np.hstack([jx, qt.rotational_jacobian(jq, self.z1[member.parent][1])])
                self.joint_force[(member.index, member.parent)] = g6.T

        self.contact_normal = {}   # (contact idx, body idx) -> (6,)
        self.contact_basis = {}    # (contact idx, body idx) -> (2nf x 6) signed
        for member in self._contact_members():
            contact = member.contact
            for body_idx, second, sign in self._contact_sides(member):
                x1, q1 = self.z1[body_idx]
                dx, dq = gap_jacobian(contact, self.conf1[body_idx], second)
                n6 = np.concatenate([dx, qt.rotational_gradient(dq, q1)])
                self.contact_normal[(member.index, body_idx)] = n6
                if contact.has_friction:
                    basis = friction_basis(contact, q1, second)
                    self.contact_basis[(member.index, body_idx)] = (
                        sign * np.hstack([basis.Bx, basis.Bq]))

    def _joint_members(self):
        for plans in self.layout.members.values():
            for m in plans:
                if isinstance(m, _JointMember):
                    yield m

    def _contact_members(self):
        for plans in self.layout.members.values():
            for m in plans:
                if isinstance(m, _ContactMember):
                    yield m

    @staticmethod
    def _contact_sides(member):
        sides = [(member.body, False, 1.0)]
        if member.body_b is not None:
            sides.append((member.body_b, True, -1.0))
        return sides

    # -- per-iterate kinematics --------------------------------------------

    def advance_bodies(self, s):
        """z2 per body for candidate velocities in s; raises on rate overflow."""
        dt = self.dt
        out = []
        for i in self.layout.body_nodes:
            sl = self.layout.node_slices[i]
            v1, w1 = s[sl.start:sl.start + 3], s[sl.start + 3:sl.stop]
            x2 = self.z1[i][0] + dt * v1
            bar = qt.omega_bar(w1, dt)
            q2 = qt.normalize(0.5 * dt * (self.L1[i] @ bar))
            out.append(_Conf(x2, q2))
        return out


def _check_cone(s, layout):
    if layout.cone_indices.size and np.any(s[layout.cone_indices] <= 0.0):
        raise InfeasiblePointError("cone variable is not strictly positive")


def residual_flat(ctx: StepContext, s, mu: float, out=None) -> np.ndarray:
    """Stacked residual at unknowns s and barrier parameter mu."""
    layout, mech, dt = ctx.layout, ctx.mechanism, ctx.dt
    _check_cone(s, layout)
    conf2 = ctx.advance_bodies(s)
    vel = layout.velocities(s)
    out = np.zeros(layout.size) if out is None else out
    f = {key: out[sl] for key, sl in layout.node_slices.items()}

    # damper wrenches at candidate velocities
    damper_force = {}
    if ctx.dampers:
        z1map = {b.id: ctx.z1[i] for i, b in enumerate(mech.bodies)}
        zdmap = {b.id: vel[i] for i, b in enumerate(mech.bodies)}
        for damper in ctx.dampers:
            for bid, (fw, tw) in damper.wrenches(mech, z1map, zdmap).items():
                i = mech.body_index[bid]
                f0, t0 = damper_force.get(i, (0.0, 0.0))
                damper_force[i] = (f0 + fw, t0 + tw)

    for i in layout.body_nodes:
        body = mech.bodies[i]
        v1, w1 = vel[i]
        force = ctx.force_const[i]
        torque = ctx.torque_const[i]
        if i in damper_force:
            fw, tw = damper_force[i]
            force = force + fw
            torque = torque + tw
        c1 = math.sqrt((2.0 / dt) ** 2 - float(w1 @ w1))
        J = body.inertia
        Jw = J @ w1
        f[i][:3] = body.mass * (v1 - ctx.states0[i].v) / dt + ctx.grad_x[i] - force
        f[i][3:] = (Jw * c1 + qt.cross(w1, Jw) + ctx.rot_const[i]
                    + ctx.grad_q_rot[i] - 2.0 * torque)

    for key, plans in layout.members.items():
        vec = f[key]
        vec[:] = 0.0
        node_s = s[layout.node_slices[key]]
        for m in plans:
            if isinstance(m, _JointMember):
                lam = node_s[m.offset:m.offset + m.rows]
                conf_a = None if m.parent is None else conf2[m.parent]
                vec[m.offset:m.offset + m.rows] = joint_residual(
                    m.joint, conf_a, conf2[m.child])
                f[m.child] -= ctx.joint_force[(m.index, m.child)] @ lam
                if m.parent is not None:
                    f[m.parent] -= ctx.joint_force[(m.index, m.parent)] @ lam
            else:
                vec[m.offset:m.offset + m.dim] = _contact_residual(
                    ctx, m, node_s[m.offset:m.offset + m.dim], conf2, vel, mu, f)
    return out


def assemble_residual(ctx: StepContext, s, mu: float) -> dict:
    """Residual per solver node at unknowns s and barrier parameter mu."""
    flat = residual_flat(ctx, s, mu)
    return {key: flat[sl] for key, sl in ctx.layout.node_slices.items()}


def _contact_residual(ctx, member, u, conf2, vel, mu, f):
    # unknowns [gamma, s_gap] (+ [beta, psi, s_cone, eta] with friction);
    # rows [s_gap - phi(z2), gamma s_gap - mu]
    #      (+ [B zdot + psi - eta, s_cone - (cf gamma - sum beta),
    #          psi s_cone - mu, beta eta - mu])
    contact = member.contact
    gamma, s_gap = u[0], u[1]
    gap2 = contact_gap(contact, conf2[member.body],
                       None if member.body_b is None else conf2[member.body_b])
    for body_idx, _, _ in ctx._contact_sides(member):
        f[body_idx] -= ctx.contact_normal[(member.index, body_idx)] * gamma
    if not contact.has_friction:
        return np.array([s_gap - gap2, gamma * s_gap - mu])
    nf2 = 2 * contact.n_f
    beta = u[2:2 + nf2]
    psi = u[2 + nf2]
    s_cone = u[3 + nf2]
    eta = u[4 + nf2:]
    rows = np.empty(member.dim)
    rows[0] = s_gap - gap2
    rows[1] = gamma * s_gap - mu
    slip = np.zeros(nf2)
    for body_idx, _, _ in ctx._contact_sides(member):
        basis = ctx.contact_basis[(member.index, body_idx)]
        v1, w1 = vel[body_idx]
        slip += basis[:, :3] @ v1 + basis[:, 3:] @ w1
        f[body_idx] -= basis.T @ beta
    rows[2:2 + nf2] = slip + psi - eta
    rows[2 + nf2] = s_cone - (contact.cf * gamma - beta.sum())
    rows[3 + nf2] = psi * s_cone - mu
    rows[4 + nf2:] = beta * eta - mu
    return rows


def assemble_jacobian(ctx: StepContext, s, mu: float = 0.0,
                      F: BlockSparseMatrix | None = None) -> BlockSparseMatrix:
    """Analytic Jacobian of assemble_residual with respect to s.

    The constraint rows are chained through the configuration update:
    d x2/d v1 = dt I and d q2/d w1 = (dt/2) lmat(q1) @ d(omega_bar)/d(omega).
    """
    layout, mech, dt = ctx.layout, ctx.mechanism, ctx.dt
    _check_cone(s, layout)
    conf2 = ctx.advance_bodies(s)
    if F is None:
        F = BlockSparseMatrix.for_ordering(layout.ordering)
    else:
        F.zero()

    dq2_dw = {}
    for i in layout.body_nodes:
        sl = layout.node_slices[i]
        w1 = s[sl.start + 3:sl.stop]
        dq2_dw[i] = 0.5 * dt * (ctx.L1[i] @ qt.omega_bar_jacobian(w1, dt))

    for i in layout.body_nodes:
        body = mech.bodies[i]
        sl = layout.node_slices[i]
        w1 = s[sl.start + 3:sl.stop]
        J = body.inertia
        c1 = math.sqrt((2.0 / dt) ** 2 - float(w1 @ w1))
        diag = np.zeros((6, 6))
        diag[:3, :3] = body.mass / dt * np.eye(3)
        diag[3:, 3:] = (c1 * J - np.outer(J @ w1, w1) / c1
                        + qt.skew(w1) @ J - qt.skew(J @ w1))
        F[(i, i)] = diag
    for (ri, ci), blk in ctx.damper_blocks.items():
        F.blocks[(ri, ci)] += blk

    for key, plans in layout.members.items():
        for m in plans:
            if isinstance(m, _JointMember):
                _joint_blocks(ctx, F, key, m, conf2, dq2_dw)
            else:
                _contact_blocks(ctx, F, key, m, s, conf2, dq2_dw)
    return F


def _joint_blocks(ctx, F, key, m, conf2, dq2_dw):
    dt = ctx.dt
    rows = slice(m.offset, m.offset + m.rows)
    jac_a, jac_b = joint_jacobian(
        m.joint, None if m.parent is None else conf2[m.parent], conf2[m.child])
    for body_idx, (jx, jq) in ((m.child, jac_b),) + (
            ((m.parent, jac_a),) if m.parent is not None else ()):
        blk = F.blocks[(key, body_idx)]
        blk[rows, :3] += dt * jx
        blk[rows, 3:] += jq @ dq2_dw[body_idx]
        F.blocks[(body_idx, key)][:, rows] += -ctx.joint_force[(m.index, body_idx)]


def _contact_blocks(ctx, F, key, m, s, conf2, dq2_dw):
    contact = m.contact
    dt = ctx.dt
    base = ctx.layout.node_slices[key].start + m.offset
    u = s[base:base + m.dim]
    gamma, s_gap = u[0], u[1]
    diag = F.blocks[(key, key)]
    off = m.offset
    r_gap, r_prod_n = off, off + 1
    c_gamma, c_sgap = off, off + 1

    diag[r_gap, c_sgap] += 1.0
    diag[r_prod_n, c_gamma] += s_gap
    diag[r_prod_n, c_sgap] += gamma

    for body_idx, second, _ in ctx._contact_sides(m):
        dx, dq = gap_jacobian(contact, conf2[body_idx], second)
        blk = F.blocks[(key, body_idx)]
        blk[r_gap, :3] += -dt * dx
        blk[r_gap, 3:] += -(dq @ dq2_dw[body_idx])
        F.blocks[(body_idx, key)][:, c_gamma] += -ctx.contact_normal[(m.index, body_idx)]

    if not contact.has_friction:
        return
    nf2 = 2 * contact.n_f
    beta = u[2:2 + nf2]
    psi = u[2 + nf2]
    s_cone = u[3 + nf2]
    eta = u[4 + nf2:]
    r_fric = slice(off + 2, off + 2 + nf2)
    r_cone = off + 2 + nf2
    r_prod_c = off + 3 + nf2
    r_prod_f = slice(off + 4 + nf2, off + 4 + 2 * nf2)
    c_beta = slice(off + 2, off + 2 + nf2)
    c_psi = off + 2 + nf2
    c_scone = off + 3 + nf2
    c_eta = slice(off + 4 + nf2, off + 4 + 2 * nf2)

    diag[r_fric, c_psi] += 1.0
    diag[r_fric, c_eta] -= np.eye(nf2)
    diag[r_cone, c_gamma] += -contact.cf
    diag[r_cone, c_beta] += 1.0
    diag[r_cone, c_scone] += 1.0
    diag[r_prod_c, c_psi] += s_cone
    diag[r_prod_c, c_scone] += psi
    diag[r_prod_f, c_beta] += np.diag(eta)
    diag[r_prod_f, c_eta] += np.diag(beta)

    for body_idx, _, _ in ctx._contact_sides(m):
        basis = ctx.contact_basis[(m.index, body_idx)]
        F.blocks[(key, body_idx)][r_fric, :] += basis
        F.blocks[(body_idx, key)][:, c_beta] += -basis.T


# ---------------------------------------------------------------------------
# Diagnostics.

def total_energy(mechanism: Mechanism, states) -> float:
    """Kinetic energy plus all conservative potentials (gravity, springs)."""
    e = 0.0
    for i, body in enumerate(mechanism.bodies):
        v, w = states[i].v, states[i].w
        e += 0.5 * body.mass * float(v @ v) + 0.5 * float(w @ body.inertia @ w)
    for element in [Gravity(b.id, mechanism.gravity) for b in mechanism.bodies]:
        e += element.potential(mechanism, states)
    for element in mechanism.elements:
        if isinstance(element, Spring):
            e += element.potential(mechanism, states)
    return e


def linear_momentum(mechanism: Mechanism, states) -> np.ndarray:
    return sum(body.mass * states[i].v for i, body in enumerate(mechanism.bodies))


def angular_momentum(mechanism: Mechanism, states, dt: float) -> np.ndarray:
    """Global-frame angular momentum transported exactly by the discrete flow.

    The spin part is the discrete momentum (dt/2)(omega_bar_s J w + w x J w)
    rotated to the global frame; it tends to rotate(q, J w) as dt -> 0.
    """
    total = np.zeros(3)
    for i, body in enumerate(mechanism.bodies):
        st = states[i]
        bar = qt.omega_bar(st.w, dt)
        p_rot = 0.5 * dt * (bar[0] * (body.inertia @ st.w)
                            + qt.cross(st.w, body.inertia @ st.w))
        total += qt.cross(st.x, body.mass * st.v) + qt.rotate(st.q, p_rot)
    return total
