"""Unit-quaternion algebra and discrete orientation kinematics.

Quaternions are numpy arrays of shape (4,), scalar part first, Hamilton
convention with local-to-global rotation action: ``rotate(q, x)`` maps a
vector from the body frame to the global frame.

All quaternion operations can be written as matrix-vector products with
the four operator matrices ``tmat``, ``lmat(q)``, ``rmat(q)``, ``vmat``:

    qmul(a, b) == lmat(a) @ b == rmat(b) @ a
    qinv(q)    == tmat() @ q            (unit q)
    rotate(q, x) == vmat() @ rmat(q).T @ lmat(q) @ vmat().T @ x
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import AngularVelocityOverflowError, InvalidQuaternionError

UNIT_TOL = 1e-9

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

_T = np.diag([1.0, -1.0, -1.0, -1.0])
_V = np.zeros((3, 4))
_V[:, 1:] = np.eye(3)


class DiscreteAngularVelocity(NamedTuple):
    """Body-frame angular velocity with the scalar completion sqrt((2/dt)^2 - w.w)."""

    omega: np.ndarray
    omega_s: float

    def stacked(self) -> np.ndarray:
        return np.concatenate(([self.omega_s], self.omega))


def check_unit(q, tol: float = UNIT_TOL) -> np.ndarray:
    """Return q as an array, raising if its norm is off unit by more than tol."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise InvalidQuaternionError(f"expected shape (4,), got {q.shape}")
    err = abs(float(q @ q) - 1.0)
    if err > 2.0 * tol:
        raise InvalidQuaternionError(f"quaternion norm off unit by {err:.3e}")
    return q


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0:
        raise InvalidQuaternionError("cannot normalize zero quaternion")
    return q / n


def qconj(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def qinv(q) -> np.ndarray:
    """Inverse of a unit quaternion (its conjugate)."""
    return qconj(check_unit(q))


def mul_raw(a, b) -> np.ndarray:
    """Hamilton product without validation or renormalization."""
    return np.array([
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ])


def qmul(a, b) -> np.ndarray:
    """Hamilton product of two unit quaternions, renormalized."""
    return normalize(mul_raw(check_unit(a), check_unit(b)))


def tmat() -> np.ndarray:
    """Conjugation matrix: tmat() @ q == qconj(q)."""
    return _T.copy()


def vmat() -> np.ndarray:
    """Vector-part selector: vmat() @ q == q[1:]."""
    return _V.copy()


def lmat(q) -> np.ndarray:
    """Left-multiplication matrix: lmat(q) @ p == qmul(q, p)."""
    s, x, y, z = q
    return np.array([
        [s, -x, -y, -z],
        [x, s, -z, y],
        [y, z, s, -x],
        [z, -y, x, s],
    ])


def rmat(q) -> np.ndarray:
    """Right-multiplication matrix: rmat(q) @ p == qmul(p, q)."""
    s, x, y, z = q
    return np.array([
        [s, -x, -y, -z],
        [x, s, z, -y],
        [y, -z, s, x],
        [z, y, -x, s],
    ])


def skew(x) -> np.ndarray:
    """Skew-symmetric matrix so that skew(a) @ b == cross(a, b)."""
    x = np.asarray(x, dtype=float)
    return np.array([
        [0.0, -x[2], x[1]],
        [x[2], 0.0, -x[0]],
        [-x[1], x[0], 0.0],
    ])


def cross(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (faster than np.cross for single pairs)."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def rotation_matrix(q) -> np.ndarray:
    """3x3 body-to-global rotation matrix of a unit quaternion.

    Written in the homogeneous quadratic form so its quaternion derivative
    matches rotate_jacobian_q exactly even off the unit sphere.
    """
    s, x, y, z = q
    ss, xx, yy, zz = s * s, x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    sx, sy, sz = s * x, s * y, s * z
    return np.array([
        [ss + xx - yy - zz, 2.0 * (xy - sz), 2.0 * (xz + sy)],
        [2.0 * (xy + sz), ss - xx + yy - zz, 2.0 * (yz - sx)],
        [2.0 * (xz - sy), 2.0 * (yz + sx), ss - xx - yy + zz],
    ])


def rotate(q, x) -> np.ndarray:
    """Rotate a body-frame vector into the global frame."""
    q = check_unit(q)
    x = np.asarray(x, dtype=float)
    return rotation_matrix(q) @ x


def rotate_inv(q, x) -> np.ndarray:
    """Rotate a global-frame vector into the body frame."""
    q = check_unit(q)
    x = np.asarray(x, dtype=float)
    return rotation_matrix(q).T @ x


def rotational_gradient(grad_q, q) -> np.ndarray:
    """Project a 4-vector gradient of a scalar function onto local rotations.

    Returns vmat() @ lmat(q).T @ grad_q, the gradient with respect to
    body-frame rotation perturbations q -> q + lmat(q) @ vmat().T @ theta.
    """
    q = np.asarray(q, dtype=float)
    grad_q = np.asarray(grad_q, dtype=float)
    return _V @ (lmat(q).T @ grad_q)


def rotational_jacobian(jac_q, q) -> np.ndarray:
    """Project an m x 4 quaternion Jacobian onto local rotations (m x 3)."""
    q = np.asarray(q, dtype=float)
    jac_q = np.asarray(jac_q, dtype=float)
    return jac_q @ lmat(q) @ _V.T


def rotate_jacobian_q(q, p) -> np.ndarray:
    """Full quaternion Jacobian d(rotate(q, p))/dq, shape 3x4."""
    p_quat = np.array([0.0, p[0], p[1], p[2]])
    # rotate(q, p) = V R(Tq) R(p^) q: differentiate both q occurrences
    rp = rmat(p_quat)
    return (rmat(qconj(q)) @ rp + lmat(rp @ q) @ _T)[1:]


def rotate_inv_jacobian_q(q, y) -> np.ndarray:
    """Full quaternion Jacobian d(rotate_inv(q, y))/dq, shape 3x4."""
    y_quat = np.array([0.0, y[0], y[1], y[2]])
    # rotate_inv(q, y) = V R(q) R(y^) T q
    ry = rmat(y_quat)
    return (lmat(ry @ qconj(q)) + rmat(q) @ ry @ _T)[1:]


def omega_bar(omega, dt: float) -> np.ndarray:
    """Stacked discrete angular velocity [omega_s, omega] for time step dt."""
    rate_sq = (2.0 / dt) ** 2 - float(omega[0] * omega[0] + omega[1] * omega[1]
                                      + omega[2] * omega[2])
    if rate_sq <= 0.0:
        raise AngularVelocityOverflowError(
            f"|omega| = {np.linalg.norm(omega):.6g} exceeds 2/dt = {2.0 / dt:.6g}"
        )
    return np.array([math.sqrt(rate_sq), omega[0], omega[1], omega[2]])


def omega_bar_jacobian(omega, dt: float) -> np.ndarray:
    """Jacobian d(omega_bar)/d(omega), shape 4x3."""
    bar = omega_bar(omega, dt)
    jac = np.zeros((4, 3))
    jac[0, :] = -np.asarray(omega, dtype=float) / bar[0]
    jac[1:, :] = np.eye(3)
    return jac


def discrete_angvel(q0, q1, dt: float) -> DiscreteAngularVelocity:
    """Body-frame angular velocity taking q0 to q1 over one step of length dt."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    q0 = check_unit(q0)
    q1 = check_unit(q1)
    rel = qmul(qconj(q0), q1)
    omega = (2.0 / dt) * rel[1:]
    rate_sq = (2.0 / dt) ** 2 - float(omega @ omega)
    if rate_sq < 0.0:
        raise AngularVelocityOverflowError(
            f"|omega| = {np.linalg.norm(omega):.6g} exceeds 2/dt = {2.0 / dt:.6g}"
        )
    return DiscreteAngularVelocity(omega, math.sqrt(rate_sq))


def step_orientation(q0, omega0, dt: float) -> np.ndarray:
    """Advance an orientation one step: q1 = (dt/2) lmat(q0) @ omega_bar(omega0)."""
    q0 = check_unit(q0)
    bar = omega_bar(omega0, dt)
    return normalize(0.5 * dt * (lmat(q0) @ bar))


def from_axis_angle(axis, angle: float) -> np.ndarray:
    """Unit quaternion for a rotation of `angle` radians about `axis`."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise InvalidQuaternionError("axis must be nonzero")
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis / n))
