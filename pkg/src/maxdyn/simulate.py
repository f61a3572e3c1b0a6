"""Batch time stepping with per-step diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bodies import BodyState
from .contacts import contact_gap
from .errors import ConvergenceError, MaxdynError
from .integrator import SolverLayout, StepContext, total_energy
from .joints import joint_residual
from .mechanism import Mechanism
from .solver import SolveOptions, interior_point


@dataclass
class TrajectoryRecord:
    """Row-per-step simulation record.

    Columns per row: time, then per body (x 3, q 4, v 3, w 3), then the
    max-norm constraint residual per joint, then (gap, normal force) per
    contact, total energy, and solver iterations for the step that
    produced the row.
    """

    body_ids: list
    num_joints: int
    num_contacts: int
    rows: list = field(default_factory=list)

    def column_names(self):
        cols = ["t"]
        for bid in self.body_ids:
            cols += [f"b{bid}_{c}" for c in
                     ("x", "y", "z", "qs", "qx", "qy", "qz",
                      "vx", "vy", "vz", "wx", "wy", "wz")]
        cols += [f"j{j}_ginf" for j in range(self.num_joints)]
        for c in range(self.num_contacts):
            cols += [f"c{c}_gap", f"c{c}_gamma"]
        cols += ["energy", "iterations"]
        return cols

    def as_array(self):
        return np.array(self.rows)

    def column(self, name):
        return self.as_array()[:, self.column_names().index(name)]

    @property
    def times(self):
        return self.as_array()[:, 0]


def _record_row(record, mechanism, states, t, gammas, iterations, dt):
    row = [t]
    for st in states:
        row.extend(st.x)
        row.extend(st.q)
        row.extend(st.v)
        row.extend(st.w)
    for joint in mechanism.joints:
        state_a = (None if joint.is_world
                   else states[mechanism.body_index[joint.parent]])
        res = joint_residual(joint, state_a, states[mechanism.body_index[joint.child]])
        row.append(float(np.abs(res).max()) if res.size else 0.0)
    for c, contact in enumerate(mechanism.contacts):
        state_b = (states[mechanism.body_index[contact.body_b]]
                   if contact.is_pair else None)
        row.append(contact_gap(contact, states[mechanism.body_index[contact.body]],
                               state_b))
        row.append(gammas[c])
    row.append(total_energy(mechanism, states))
    row.append(float(iterations))
    record.rows.append(np.array(row))


def step(mechanism: Mechanism, states, dt, opts=None, warm_start=None,
         layout=None):
    """Advance one time step; returns (new states, report, solution vector)."""
    layout = layout or SolverLayout(mechanism)
    ctx = StepContext(mechanism, states, dt, layout)
    s0 = layout.pack_states(states) if warm_start is None else warm_start
    s, report = interior_point(ctx, s0, opts)
    new_states = []
    vel = layout.velocities(s)
    for i, _ in enumerate(mechanism.bodies):
        x1, q1 = ctx.z1[i]
        v1, w1 = vel[i]
        new_states.append(BodyState(x1, q1, v1.copy(), w1.copy()))
    return new_states, report, s


def simulate(mechanism: Mechanism, states, steps, dt, opts=None) -> TrajectoryRecord:
    """Run `steps` time steps of length dt, recording one row per state.

    Each step warm-starts from the previous solution. On solver failure at
    step k a ConvergenceError is raised carrying the partial trajectory in
    its `record` attribute and the failing step in `step`.
    """
    opts = opts or SolveOptions()
    layout = SolverLayout(mechanism)
    record = TrajectoryRecord([b.id for b in mechanism.bodies],
                              len(mechanism.joints), len(mechanism.contacts))
    gammas = [0.0] * len(mechanism.contacts)
    _record_row(record, mechanism, states, 0.0, gammas, 0, dt)
    warm = None
    for k in range(steps):
        try:
            states, report, s = step(mechanism, states, dt, opts, warm, layout)
        except MaxdynError as exc:
            err = ConvergenceError(
                f"solver failed at step {k}: {exc}",
                report=getattr(exc, "report", None), step=k)
            err.record = record
            raise err from exc
        warm = s
        for c in range(len(mechanism.contacts)):
            node, offset = layout.contact_offsets[c]
            gammas[c] = float(s[layout.node_slices[node]][offset])
        _record_row(record, mechanism, states, (k + 1) * dt, gammas,
                    report.iterations, dt)
    return record
