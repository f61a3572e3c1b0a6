"""The mechanism data model and its constraint graph."""

from __future__ import annotations

import numpy as np

from .bodies import WORLD, Body
from .contacts import Contact
from .errors import ModelError
from .forces import Damper, ExternalWrench, Gravity, JointActuator, Spring
from .graph import BODY, CONTACT, JOINT, Graph, dfs_order
from .joints import Joint

DEFAULT_GRAVITY = np.array([0.0, 0.0, -9.81])


class Mechanism:
    """Bodies, joints, contacts, and force elements of one mechanical system.

    Treated as immutable once constructed: the constraint graph and the
    solver ordering are built eagerly and cached. WORLD is a pseudo-body
    with fixed zero position and identity orientation and owns no state.
    """

    def __init__(self, bodies, joints=(), contacts=(), elements=(),
                 gravity=DEFAULT_GRAVITY):
        self.bodies: list[Body] = list(bodies)
        self.joints: list[Joint] = list(joints)
        self.contacts: list[Contact] = list(contacts)
        self.elements = list(elements)
        self.gravity = np.asarray(gravity, dtype=float)
        self.body_index = {b.id: i for i, b in enumerate(self.bodies)}
        self._validate()
        self.graph = build_graph(self)
        self.ordering = dfs_order(self.graph)

    def _validate(self):
        if not self.bodies:
            raise ModelError("mechanism needs at least one body")
        if len(self.body_index) != len(self.bodies):
            raise ModelError("duplicate body ids")
        if WORLD in self.body_index:
            raise ModelError(f"body id {WORLD} is reserved for WORLD")
        for j, joint in enumerate(self.joints):
            if not joint.is_world and joint.parent not in self.body_index:
                raise ModelError(f"joint {j}: unknown parent body {joint.parent}")
            if joint.child not in self.body_index:
                raise ModelError(f"joint {j}: unknown child body {joint.child}")
        for c, contact in enumerate(self.contacts):
            if contact.body not in self.body_index:
                raise ModelError(f"contact {c}: unknown body {contact.body}")
            if contact.is_pair and contact.body_b not in self.body_index:
                raise ModelError(f"contact {c}: unknown second body {contact.body_b}")
        for e, element in enumerate(self.elements):
            for attr in ("parent", "child", "body"):
                ref = getattr(element, attr, None)
                if ref is not None and ref != WORLD and ref not in self.body_index:
                    raise ModelError(
                        f"force element {e}: unknown body {ref}")
            if isinstance(element, JointActuator) and not (
                    0 <= element.joint < len(self.joints)):
                raise ModelError(f"force element {e}: unknown joint {element.joint}")

    @property
    def num_bodies(self):
        return len(self.bodies)

    def joint_node(self, j):
        return self.num_bodies + j

    def contact_node(self, c):
        return self.num_bodies + len(self.joints) + c

    def gravity_elements(self):
        return [Gravity(b.id, self.gravity) for b in self.bodies]

    def all_elements(self):
        return self.gravity_elements() + self.elements


def build_graph(mechanism: Mechanism) -> Graph:
    """Constraint graph: body and constraint nodes, incidence and coupling edges.

    Joints and contacts become constraint nodes tied to their bodies;
    body-to-body dampers add velocity-coupling edges directly between body
    nodes.
    """
    g = Graph()
    for i, _ in enumerate(mechanism.bodies):
        g.add_node(i, 6, kind=BODY)
    for j, joint in enumerate(mechanism.joints):
        if joint.num_rows == 0:
            continue  # a floating joint constrains nothing
        g.add_node(mechanism.joint_node(j), joint.num_rows, kind=JOINT,
                   world_attached=joint.is_world)
        g.add_edge(mechanism.joint_node(j), mechanism.body_index[joint.child])
        if not joint.is_world:
            g.add_edge(mechanism.joint_node(j), mechanism.body_index[joint.parent])
    for c, contact in enumerate(mechanism.contacts):
        g.add_node(mechanism.contact_node(c), contact.num_unknowns, kind=CONTACT)
        g.add_edge(mechanism.contact_node(c), mechanism.body_index[contact.body])
        if contact.is_pair:
            g.add_edge(mechanism.contact_node(c), mechanism.body_index[contact.body_b])
    for element in mechanism.elements:
        if isinstance(element, Damper) and element.couples_bodies:
            a = mechanism.body_index[element.parent]
            b = mechanism.body_index[element.child]
            if b not in g.adj[a]:
                g.add_edge(a, b)
    return g
