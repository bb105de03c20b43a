"""
Cell problem L_a u = b_a on the mean-zero subspace and the effective conductance A_eff(a).
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateCoefficient, NotConverged
from .grid import (DiffusionStencil, Direction, Field, check_positive, resolve_direction,
                   stencil_energy)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class CGResult:
    x: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool


def project_mean_zero(x: np.ndarray) -> np.ndarray:
    return x - x.mean()


def conjugate_gradient(apply: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray, tol: float,
                       max_iter: int, project: Optional[Callable] = None,
                       x0: Optional[np.ndarray] = None) -> CGResult:
    """
    Conjugate gradients for a symmetric positive (semi)definite operator.

    When project is given the iteration runs on its range: the right hand side, the iterate
    and the residual are re-projected every step, which keeps a singular operator's nullspace
    from creeping into the iterate.

    :param apply: Operator as a function of a raw array
    :param rhs: Right hand side
    :param tol: Relative tolerance on the true residual, ||A x - rhs|| <= tol ||rhs||
    :param max_iter: Iteration limit
    :param project: Optional projector onto the solution subspace
    :param x0: Optional initial guess, zero otherwise
    :return: CGResult with the relative true residual
    """
    proj = project if project is not None else (lambda v: v)
    b = proj(rhs)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else proj(np.array(x0, dtype=np.float64))
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, True)
    target = tol * bnorm
    r = proj(b - apply(x)) if x0 is not None else b.copy()
    p = r.copy()
    rr = np.vdot(r, r)
    best_x, best_res = x.copy(), np.sqrt(rr)
    iterations = 0
    while iterations < max_iter:
        if np.sqrt(rr) <= target:
            # recurrence residual says done: confirm on the true residual
            true_r = proj(b - apply(x))
            true_norm = np.linalg.norm(true_r)
            if true_norm <= target:
                return CGResult(x, iterations, true_norm / bnorm, True)
            r = true_r
            p = r.copy()
            rr = np.vdot(r, r)
        ap = apply(p)
        pap = np.vdot(p, ap)
        if pap <= 0.0:
            break
        alpha = rr / pap
        x = proj(x + alpha * p)
        r = proj(r - alpha * ap)
        rr_new = np.vdot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        iterations += 1
        if np.sqrt(rr) < best_res:
            best_x, best_res = x.copy(), np.sqrt(rr)
    true_norm = np.linalg.norm(proj(b - apply(x)))
    if true_norm <= target:
        return CGResult(x, iterations, true_norm / bnorm, True)
    best_true = np.linalg.norm(proj(b - apply(best_x)))
    if best_true < true_norm:
        x, true_norm = best_x, best_true
    return CGResult(x, iterations, true_norm / bnorm, False)


@dataclass(frozen=True, eq=False)
class EllipticSolveReport:
    """
    Outcome of one cell-problem solve.

    :ivar u: Mean-zero minimizer
    :ivar iterations: CG iterations
    :ivar residual_norm: ||L_a u - b_a|| / ||b_a|| (0 when b_a = 0)
    :ivar a_eff: 2 E(u; a)
    """
    u: Field
    iterations: int
    residual_norm: float
    a_eff: float


def solve_cell_problem(a: Field, xi: Optional[Direction] = None, tol: float = DEFAULT_TOL,
                       max_iter: Optional[int] = None) -> EllipticSolveReport:
    """
    Solves L_a u = b_a for the mean-zero u by projected conjugate gradients.
    :param a: Coefficient field, strictly positive
    :param xi: Direction, defaults to e_1
    :param tol: Relative residual tolerance
    :param max_iter: Iteration limit, defaults to 10 n^d
    :raises DegenerateCoefficient: if a has a non-positive entry
    :raises NotConverged: with the best report as ``best`` when max_iter is reached
    """
    if tol <= 0:
        raise ValueError('tolerance must be positive, got %r' % (tol,))
    check_positive(a)
    grid = a.grid
    xi = resolve_direction(grid, xi)
    max_iter = 10 * grid.size if max_iter is None else int(max_iter)
    stencil = DiffusionStencil(a)
    b = stencil.rhs(xi)
    result = conjugate_gradient(stencil.apply, b, tol, max_iter, project=project_mean_zero)
    a_eff = 2.0 * stencil_energy(stencil, result.x, xi, rhs=b)
    report = EllipticSolveReport(Field(result.x, grid), result.iterations,
                                 result.residual_norm, a_eff)
    if not result.converged:
        raise NotConverged('cell problem did not reach relative residual %g' % tol,
                           best=report, iterations=result.iterations,
                           residual=result.residual_norm)
    logger.debug('cell problem: %d CG iterations, residual %.3e, A_eff %.12g',
                 result.iterations, result.residual_norm, a_eff)
    return report


def effective_conductance(a: Field, xi: Optional[Direction] = None,
                          tol: float = DEFAULT_TOL) -> float:
    """
    A_eff(a) = 2 min_u E(u; a) = h^d (u*^T L_a u* - 2 u*^T b_a + a^T 1)
    """
    return solve_cell_problem(a, xi, tol).a_eff


def harmonic_mean_1d(a: Field) -> float:
    """
    Harmonic mean of the nodal values, ((1/n) sum 1/a_i)^-1
    :raises DegenerateCoefficient: if any a_i <= 0
    """
    if a.grid.d != 1:
        raise ValueError('harmonic_mean_1d needs a 1D field, got d=%d' % a.grid.d)
    check_positive(a)
    return 1.0 / np.mean(1.0 / a.values)


def half_grid_harmonic_mean_1d(a: Field) -> float:
    """
    Harmonic mean of the half-grid values (a_i + a_{i+1}) / 2, the exact discrete 1D A_eff
    (the flux through every half-grid edge is the same constant).
    """
    if a.grid.d != 1:
        raise ValueError('half_grid_harmonic_mean_1d needs a 1D field, got d=%d' % a.grid.d)
    if np.any(a.values <= 0.0):
        raise DegenerateCoefficient('coefficient has non-positive entries')
    half = 0.5 * (a.values + np.roll(a.values, -1))
    return 1.0 / np.mean(1.0 / half)
