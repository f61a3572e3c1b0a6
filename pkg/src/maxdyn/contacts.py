"""Contact points, signed gaps, and linearized friction cones."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quaternion as qt
from .bodies import BodyState
from .errors import ModelError
from .joints import _rot, selection_from_axis

EZ = np.array([0.0, 0.0, 1.0])


@dataclass
class Contact:
    """Declared contact point: ground-plane by default, point-pair if body_b is set.

    `p` points from the body's center of mass to the contact point in the
    body frame. The normal is a fixed global direction (from body to
    environment, or from body to body_b for pairs).
    """

    body: int
    p: np.ndarray
    cf: float = 0.0
    n_f: int = 2
    normal: np.ndarray = field(default_factory=lambda: EZ.copy())
    body_b: int | None = None
    p_b: np.ndarray | None = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.normal = np.asarray(self.normal, dtype=float)
        n = np.linalg.norm(self.normal)
        if n < 1e-12:
            raise ModelError("contact normal has zero length")
        self.normal = self.normal / n
        if self.cf < 0.0:
            raise ModelError("friction coefficient must be nonnegative")
        if self.n_f < 1:
            raise ModelError("need at least one friction direction pair")
        if self.body_b is not None:
            self.p_b = np.asarray(self.p_b, dtype=float)

    @property
    def is_pair(self):
        return self.body_b is not None

    @property
    def has_friction(self):
        return self.cf > 0.0

    @property
    def num_unknowns(self):
        # [gamma, s_gap] or [gamma, s_gap, beta(2 n_f), psi, s_cone, eta(2 n_f)];
        # the slacks keep every barrier product strictly positive
        return 2 if not self.has_friction else 4 + 4 * self.n_f


@dataclass
class FrictionBasis:
    """Row-form friction mappings: force = Bx.T @ beta, body torque = Bq.T @ beta.

    Rows of Bx come in +/- pairs of unit tangents b_i orthogonal to the
    contact normal; Bq maps the same force to the torque about the center
    of mass, so Bx @ v + Bq @ w is the tangential contact-point velocity.
    """

    Bx: np.ndarray
    Bq: np.ndarray
    E: np.ndarray


def contact_point(contact: Contact, state: BodyState, second=False):
    p = contact.p_b if second else contact.p
    return state.x + _rot(state) @ p


def contact_gap(contact: Contact, state: BodyState, state_b: BodyState | None = None):
    """Signed distance along the contact normal; nonnegative when separated."""
    if contact.is_pair:
        if state_b is None:
            raise ModelError("pair contact requires the second body state")
        return float(contact.normal @ (contact_point(contact, state_b, True)
                                       - contact_point(contact, state)))
    return float(contact.normal @ contact_point(contact, state))


def gap_jacobian(contact: Contact, state: BodyState, second=False):
    """Gap Jacobian wrt one body's state: (d/dx (3,), d/dq (4,)).

    For pair contacts the first body's rows carry a minus sign (the gap
    grows when the bodies separate along the normal).
    """
    p = contact.p_b if second else contact.p
    sign = -1.0 if (contact.is_pair and not second) else 1.0
    dx = sign * contact.normal
    dq = sign * (contact.normal @ qt.rotate_jacobian_q(state.q, p))
    return dx, dq


def tangent_directions(normal, n_f):
    """n_f unit tangents evenly spread in the plane orthogonal to the normal."""
    v12, _ = selection_from_axis(normal)
    t1, t2 = v12[:, 0], v12[:, 1]
    angles = np.pi * np.arange(n_f) / n_f
    return [np.cos(a) * t1 + np.sin(a) * t2 for a in angles]


def friction_basis(contact: Contact, q, second=False) -> FrictionBasis:
    """Friction-cone basis for one body of the contact at orientation q."""
    p = contact.p_b if second else contact.p
    rows = []
    for b in tangent_directions(contact.normal, contact.n_f):
        rows.append(b)
        rows.append(-b)
    bx = np.array(rows)
    bq = -bx @ qt.rotation_matrix(q) @ qt.skew(p)
    return FrictionBasis(bx, bq, np.ones(2 * contact.n_f))
