"""Exception types raised across the package."""


class MaxdynError(Exception):
    """Base class for all package errors."""


class InvalidQuaternionError(MaxdynError):
    """A quaternion argument is not unit within tolerance."""


class AngularVelocityOverflowError(MaxdynError):
    """An angular velocity exceeds 2/dt, so no unit-norm orientation update exists."""


class DegenerateAxisError(MaxdynError):
    """A direction vector with (near) zero length cannot define an axis."""


class ModelError(MaxdynError):
    """A mechanism definition is inconsistent (dangling ids, bad parameters)."""


class MechanismFileError(MaxdynError):
    """A mechanism file failed to parse or validate."""


class SingularSystemError(MaxdynError):
    """A diagonal pivot block is numerically singular during factorization."""

    def __init__(self, node, message=None):
        self.node = node
        super().__init__(message or f"singular pivot block at node {node}")


class InfeasiblePointError(MaxdynError):
    """A cone variable left the strictly positive region."""


class LineSearchError(MaxdynError):
    """Backtracking failed to reduce the residual within the halving budget."""


class ConvergenceError(MaxdynError):
    """The Newton loop hit its iteration cap before reaching tolerance."""

    def __init__(self, message, report=None, step=None):
        self.report = report
        self.step = step
        super().__init__(message)
