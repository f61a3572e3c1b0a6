"""Interior-point Newton loop driving each implicit step residual to zero.

Newton directions come from the graph-ordered block LDU; a
fraction-to-boundary clip keeps the cone variables (contact normal forces,
friction magnitudes and their duals) strictly positive, a backtracking
line search halves the step until the residual norm decreases, and the
barrier parameter shrinks geometrically once the perturbed residual is
resolved, down to a floor of tol/10. Without contacts no complementarity
rows exist and the loop is a plain Newton method.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (AngularVelocityOverflowError, ConvergenceError,
                     InfeasiblePointError, LineSearchError)
from .integrator import SolverLayout, StepContext, assemble_jacobian, assemble_residual
from .ldu import BlockSparseMatrix, factor_cyclic, solve_cyclic

CONE_FLOOR = 1e-10
_MAX_BUMPS = 15


@dataclass
class SolveOptions:
    tol: float = 1e-10
    max_newton_iters: int = 100
    max_linesearch_halvings: int = 50
    mu0: float = 1.0                 # scale on the mean initial complementarity
    mu_shrink: float = 0.1
    fraction_to_boundary: float = 0.995

    def __post_init__(self):
        if not (0.0 < self.mu_shrink < 1.0):
            raise ValueError("mu_shrink must lie in (0, 1)")
        if not (0.0 < self.fraction_to_boundary < 1.0):
            raise ValueError("fraction_to_boundary must lie in (0, 1)")
        if min(self.tol, self.max_newton_iters, self.max_linesearch_halvings,
               self.mu0) <= 0:
            raise ValueError("options must be positive")

    @property
    def mu_floor(self):
        return self.tol / 10.0


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residual_norm: float = np.inf       # barrier-perturbed norm at exit
    residual_norm_unperturbed: float = np.inf
    mu: float = 0.0
    trace: list = field(default_factory=list)


def _flatten(f: dict, layout: SolverLayout) -> np.ndarray:
    out = np.empty(layout.size)
    for key, sl in layout.node_slices.items():
        out[sl] = f[key]
    return out


def newton_direction(F: BlockSparseMatrix, f: dict, ordering) -> dict:
    """Solve F ds = -f with the graph-ordered factorization (F is overwritten)."""
    factor_cyclic(F, ordering)
    return solve_cyclic(F, f, ordering)


def feasible_step(ds: np.ndarray, s: np.ndarray, layout: SolverLayout,
                  fraction: float = 0.995) -> np.ndarray:
    """Scale the whole step so cone coordinates keep fraction (1 - tau) of their value."""
    idx = layout.cone_indices
    if idx.size == 0:
        return ds
    neg = ds[idx] < 0.0
    if not np.any(neg):
        return ds
    alpha = float(np.min(fraction * s[idx][neg] / (-ds[idx][neg])))
    if alpha >= 1.0:
        return ds
    return alpha * ds


def line_search(s, ds, norm0, eval_norm, max_halvings=50):
    """Backtrack from a full step until the residual norm strictly decreases.

    Steps that leave the feasible region (cone variables, angular-rate
    limit) are rejected the same way as non-decreasing ones.
    """
    alpha = 1.0
    for _ in range(max_halvings):
        candidate = s + alpha * ds
        try:
            norm1 = eval_norm(candidate)
        except (AngularVelocityOverflowError, InfeasiblePointError):
            norm1 = np.inf
        if norm1 < norm0:
            return candidate, norm1
        alpha *= 0.5
    raise LineSearchError(
        f"no residual decrease within {max_halvings} halvings "
        f"(residual {norm0:.3e})")


def update_barrier(mu, residual_norm, opts: SolveOptions):
    """Shrink the barrier once the perturbed residual is resolved at this mu."""
    if residual_norm < max(opts.tol, mu):
        return max(mu * opts.mu_shrink, opts.mu_floor)
    return mu


def _mean_complementarity(ctx: StepContext, s):
    """Mean of the complementarity products at s (0 without contacts)."""
    layout = ctx.layout
    products = []
    for key, plans in layout.members.items():
        node_s = s[layout.node_slices[key]]
        for m in plans:
            if not hasattr(m, "contact"):
                continue
            u = node_s[m.offset:m.offset + m.dim]
            products.append(u[0] * u[1])          # gamma * s_gap
            if m.contact.has_friction:
                nf2 = 2 * m.contact.n_f
                beta, psi, s_cone = u[2:2 + nf2], u[2 + nf2], u[3 + nf2]
                eta = u[4 + nf2:]
                products.append(psi * s_cone)
                products.extend(beta * eta)
    return float(np.mean(products)) if products else 0.0


def interior_point(ctx: StepContext, s_init, opts: SolveOptions | None = None):
    """Drive the step residual to tolerance; returns (s, SolveReport).

    The iteration follows: Newton direction from the sparse factorization,
    fraction-to-boundary clip, halving line search, and a monotone barrier
    schedule. Termination requires the barrier-perturbed residual below tol
    with mu at its floor.
    """
    opts = opts or SolveOptions()
    layout = ctx.layout
    s = np.array(s_init, dtype=float)
    if layout.cone_indices.size:
        idx = layout.cone_indices
        s[idx] = np.maximum(s[idx], CONE_FLOOR)
        mu = max(opts.mu0 * _mean_complementarity(ctx, s), opts.mu_floor)
    else:
        mu = 0.0

    report = SolveReport(mu=mu)
    F = BlockSparseMatrix.for_ordering(layout.ordering)

    def eval_norm_at(mu_value):
        def _norm(candidate):
            r = assemble_residual(ctx, candidate, mu_value)
            return float(np.abs(_flatten(r, layout)).max())
        return _norm

    guard = 0
    bumps = 0
    while report.iterations < opts.max_newton_iters:
        guard += 1
        if guard > 4 * opts.max_newton_iters:
            break
        f = assemble_residual(ctx, s, mu)
        norm = float(np.abs(_flatten(f, layout)).max())
        report.trace.append(norm)
        if norm < opts.tol and mu <= opts.mu_floor:
            report.converged = True
            break
        if mu > opts.mu_floor:
            new_mu = update_barrier(mu, norm, opts)
            if new_mu != mu:
                mu = new_mu
                continue
        F = assemble_jacobian(ctx, s, mu, F)
        ds_nodes = newton_direction(F, f, layout.ordering)
        ds = _flatten(ds_nodes, layout)
        raw_scale = float(np.abs(ds).max())
        ds = feasible_step(ds, s, layout, opts.fraction_to_boundary)
        clipped_scale = float(np.abs(ds).max())
        stalled = raw_scale > 0.0 and clipped_scale < 1e-8 * raw_scale
        if not stalled:
            try:
                s, _ = line_search(s, ds, norm, eval_norm_at(mu),
                                   opts.max_linesearch_halvings)
                report.iterations += 1
                continue
            except LineSearchError:
                stalled = True
        # A stalled step with an active barrier means the Newton model is
        # blocked at the cone boundary (typically a contact-state change);
        # re-center by raising mu and resume the homotopy.
        if layout.cone_indices.size == 0 or bumps >= _MAX_BUMPS:
            raise LineSearchError(
                f"no residual decrease (residual {norm:.3e}, mu {mu:.1e})")
        bumps += 1
        mu = min(max(mu / opts.mu_shrink ** 2, 0.01 * min(norm, 1e3)), 1e6)

    report.mu = mu
    report.residual_norm = eval_norm_at(mu)(s)
    report.residual_norm_unperturbed = eval_norm_at(0.0)(s) if mu > 0 else report.residual_norm
    if not report.converged:
        report.converged = report.residual_norm < opts.tol and mu <= opts.mu_floor
    if not report.converged:
        raise ConvergenceError(
            f"no convergence after {report.iterations} Newton iterations "
            f"(residual {report.residual_norm:.3e}, mu {mu:.1e})", report=report)
    return s, report
