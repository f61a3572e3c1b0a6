"""Rigid bodies and their maximal-coordinate states."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError
from .quaternion import IDENTITY, check_unit

WORLD = -1


@dataclass
class Body:
    """Rigid body: mass and body-frame inertia about the center of mass."""

    id: int
    mass: float
    inertia: np.ndarray

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0.0:
            raise ModelError(f"body {self.id}: mass must be positive")
        if self.inertia.shape != (3, 3):
            raise ModelError(f"body {self.id}: inertia must be 3x3")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ModelError(f"body {self.id}: inertia must be symmetric")
        if np.linalg.eigvalsh(self.inertia)[0] <= 0.0:
            raise ModelError(f"body {self.id}: inertia must be positive definite")

    @property
    def mass_matrix(self):
        return self.mass * np.eye(3)


@dataclass
class BodyState:
    """Configuration and velocity: global position/orientation, global linear
    velocity, body-frame angular velocity."""

    x: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: IDENTITY.copy())
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.q = check_unit(self.q)
        self.v = np.asarray(self.v, dtype=float)
        self.w = np.asarray(self.w, dtype=float)

    def copy(self):
        return BodyState(self.x.copy(), self.q.copy(), self.v.copy(), self.w.copy())


def box_inertia(mass, sx, sy, sz):
    """Inertia of a solid box with side lengths (sx, sy, sz)."""
    return mass / 12.0 * np.diag([sy * sy + sz * sz,
                                  sx * sx + sz * sz,
                                  sx * sx + sy * sy])


def sphere_inertia(mass, radius):
    """Inertia of a solid sphere."""
    return 0.4 * mass * radius * radius * np.eye(3)
