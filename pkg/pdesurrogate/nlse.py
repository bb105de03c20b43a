"""
Ground state of the discrete defocusing NLSE

    (L u)_i + a_i u_i + s u_i^3 = E u_i,    h^d sum_i u_i^2 = 1

by a linear eigensolve at s = 0 followed by homotopy continuation in s with Newton corrections.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import conjugate_gradient
from .errors import NotConverged, SingularJacobian
from .grid import Field, GridSpec, check_positive, check_same_grid, laplacian_matrix, laplacian_values

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_SIGMA = 2.0
DEFAULT_STEP = 0.4
NEWTON_MAX_ITER = 50


@dataclass(frozen=True, eq=False)
class NlseState:
    """
    One point on the ground-state branch.

    :ivar u: Normalized, positive ground state, h^d sum u^2 = 1
    :ivar e0: Eigenvalue
    :ivar s: Nonlinearity strength the state solves
    :ivar residual_norm: max-norm of the NLSE residual and of the normalization defect
    :ivar iterations: Iterations spent producing this state
    :ivar residual_history: Residual before every Newton update (empty for the eigensolve)
    """
    u: Field
    e0: float
    s: float
    residual_norm: float
    iterations: int = 0
    residual_history: Tuple[float, ...] = field(default_factory=tuple)


def _pointwise_residual(u: np.ndarray, a: np.ndarray, e0: float, s: float, n: int) -> np.ndarray:
    return laplacian_values(u, n) + a * u + s * u ** 3 - e0 * u


def _full_residual_norm(u, a, e0, s, grid: GridSpec) -> float:
    r = _pointwise_residual(u, a, e0, s, grid.n)
    defect = grid.cell_volume * np.vdot(u, u) - 1.0
    return float(max(np.max(np.abs(r)), abs(defect)))


def _normalize(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    u = u / np.sqrt(grid.cell_volume * np.vdot(u, u))
    # fixes the +-u gauge
    if u.sum() < 0:
        u = -u
    return u


def nlse_residual(state: NlseState, a: Field, s: Optional[float] = None) -> Field:
    """
    Pointwise residual (Lu)_i + a_i u_i + s u_i^3 - E u_i
    :param state: Candidate state
    :param a: Potential
    :param s: Nonlinearity strength, defaults to state.s
    """
    grid = check_same_grid(state.u, a)
    s = state.s if s is None else s
    return Field(_pointwise_residual(state.u.values, a.values, state.e0, s, grid.n), grid)


def rayleigh_eigenvalue(u: Field, a: Field, s: float) -> float:
    """E = h^d (u^T L u + sum a_i u_i^2 + s sum u_i^4) / (h^d sum u_i^2)"""
    grid = check_same_grid(u, a)
    v = u.values
    num = np.vdot(v, laplacian_values(v, grid.n)) + np.vdot(a.values * v, v) + s * np.sum(v ** 4)
    return float(num / np.vdot(v, v))


def nlse_energy(u: Field, a: Field, s: float) -> float:
    """
    Variational energy h^d (u^T L u + sum a_i u_i^2 + (s/2) sum u_i^4) whose minimizer on the
    sphere h^d sum u^2 = 1 is the ground state.
    """
    grid = check_same_grid(u, a)
    v = u.values
    quad = np.vdot(v, laplacian_values(v, grid.n)) + np.vdot(a.values * v, v)
    return float(grid.cell_volume * (quad + 0.5 * s * np.sum(v ** 4)))


def linear_ground_state(a: Field, tol: float = DEFAULT_TOL, max_iter: int = 500) -> NlseState:
    """
    Smallest eigenpair of L + diag(a) by shifted inverse power iteration.

    The shift min(a) - 1 sits strictly below the spectrum, so every inner solve is SPD and done by CG.
    A Newton polish at s = 0 takes over if the iteration stalls above tol.

    :param a: Potential, strictly positive
    :param tol: Residual tolerance (max-norm)
    :param max_iter: Outer iteration limit
    :raises NotConverged: if the residual tolerance is not reached
    """
    check_positive(a)
    grid = a.grid
    av = a.values
    shift = float(av.min()) - 1.0

    def shifted(v):
        return laplacian_values(v, grid.n) + (av - shift) * v

    u = _normalize(np.ones(grid.shape), grid)
    e0 = rayleigh_eigenvalue(Field(u, grid), a, 0.0)
    residual = _full_residual_norm(u, av, e0, 0.0, grid)
    best = (residual, u, e0)
    stalled = 0
    it = 0
    while residual > tol and it < max_iter:
        inner = conjugate_gradient(shifted, u, 1e-12, 2 * grid.size + 50, x0=u / (e0 - shift))
        u = _normalize(inner.x, grid)
        e0 = rayleigh_eigenvalue(Field(u, grid), a, 0.0)
        residual = _full_residual_norm(u, av, e0, 0.0, grid)
        it += 1
        if residual < 0.5 * best[0]:
            best = (residual, u, e0)
            stalled = 0
        else:
            stalled += 1
            if stalled >= 5:
                break
    residual, u, e0 = best
    state = NlseState(Field(u, grid), e0, 0.0, residual, it)
    if residual > tol:
        logger.debug('inverse iteration stalled at residual %.3e, polishing with Newton', residual)
        polished = newton_correct(state, a, 0.0, tol)
        state = NlseState(polished.u, polished.e0, 0.0, polished.residual_norm,
                          it + polished.iterations, polished.residual_history)
    logger.debug('linear ground state: E = %.12g after %d iterations', state.e0, state.iterations)
    return state


def _bordered_jacobian(lap: sp.csr_matrix, u: np.ndarray, a: np.ndarray, e0: float, s: float,
                       grid: GridSpec) -> sp.csc_matrix:
    diag = sp.diags(a + 3.0 * s * u ** 2 - e0)
    col = sp.csr_matrix(-u.reshape(-1, 1))
    row = sp.csr_matrix(2.0 * grid.cell_volume * u.reshape(1, -1))
    return sp.bmat([[lap + diag, col], [row, None]], format='csc')


def newton_correct(state: NlseState, a: Field, s: float, tol: float = DEFAULT_TOL,
                   max_iter: int = NEWTON_MAX_ITER, lap: Optional[sp.csr_matrix] = None) -> NlseState:
    """
    Newton iteration on F(u, E) = (Lu + a u + s u^3 - E u, h^d sum u^2 - 1) using the bordered
    Jacobian [[L + diag(a) + 3s diag(u^2) - E I, -u], [2 h^d u^T, 0]].

    :param state: Warm start near the s-branch
    :param a: Potential
    :param s: Target nonlinearity strength
    :param tol: Residual tolerance (max-norm)
    :param max_iter: Newton iteration limit
    :param lap: Optional pre-assembled sparse Laplacian for the grid
    :raises SingularJacobian: if the bordered system cannot be solved
    :raises NotConverged: with the last state as ``best`` after max_iter updates
    """
    grid = check_same_grid(state.u, a)
    lap = laplacian_matrix(grid) if lap is None else lap
    av = a.values.ravel()
    u = state.u.values.ravel().copy()
    e0 = float(state.e0)
    history: List[float] = []
    for it in range(max_iter + 1):
        r = _pointwise_residual(u.reshape(grid.shape), a.values, e0, s, grid.n).ravel()
        defect = grid.cell_volume * np.vdot(u, u) - 1.0
        residual = float(max(np.max(np.abs(r)), abs(defect)))
        history.append(residual)
        if residual <= tol:
            break
        if it == max_iter:
            best = NlseState(Field(_normalize(u, grid), grid), e0, s, residual, it, tuple(history))
            raise NotConverged('Newton did not reach residual %g' % tol, best=best, s=s,
                               residual=residual)
        jac = _bordered_jacobian(lap, u, av, e0, s, grid)
        rhs = -np.concatenate([r, [defect]])
        with warnings.catch_warnings():
            warnings.simplefilter('error', spla.MatrixRankWarning)
            try:
                step = spla.spsolve(jac, rhs)
            except (RuntimeError, spla.MatrixRankWarning) as err:
                raise SingularJacobian('bordered Newton system is singular at s=%g: %s'
                                       % (s, err)) from err
        if not np.all(np.isfinite(step)):
            raise SingularJacobian('bordered Newton system produced non-finite step at s=%g' % s)
        u += step[:-1]
        e0 += float(step[-1])
    # sign only: rescaling would move the accepted iterate off its residual
    if u.sum() < 0:
        u = -u
    residual = _full_residual_norm(u.reshape(grid.shape), a.values, e0, s, grid)
    return NlseState(Field(u, grid), e0, s, residual, len(history) - 1, tuple(history))


def _strengths(sigma: float, step: float) -> List[float]:
    if sigma < 0:
        raise ValueError('only the defocusing case sigma >= 0 is supported, got %r' % (sigma,))
    if sigma == 0:
        return []
    if step <= 0:
        raise ValueError('homotopy step must be positive, got %r' % (step,))
    count = int(round(sigma / step))
    if count < 1 or abs(count * step - sigma) > 1e-9 * max(1.0, sigma):
        raise ValueError('step %r does not divide sigma %r into equal increments' % (step, sigma))
    return [sigma * j / count for j in range(1, count + 1)]


def homotopy_path(a: Field, sigma: float = DEFAULT_SIGMA, step: float = DEFAULT_STEP,
                  tol: float = DEFAULT_TOL, max_iter: int = NEWTON_MAX_ITER) -> List[NlseState]:
    """
    All accepted homotopy stages, s = 0, step, 2 step, ..., sigma, each warm-started from the previous
    :raises NotConverged: naming the failing s
    :raises SingularJacobian: naming the failing s
    """
    strengths = _strengths(sigma, step)
    states = [linear_ground_state(a, tol)]
    lap = laplacian_matrix(a.grid)
    for s in strengths:
        states.append(newton_correct(states[-1], a, s, tol, max_iter, lap=lap))
        logger.debug('homotopy s=%.3g: E = %.12g in %d Newton steps',
                     s, states[-1].e0, states[-1].iterations)
    return states


def ground_state_homotopy(a: Field, sigma: float = DEFAULT_SIGMA, step: float = DEFAULT_STEP,
                          tol: float = DEFAULT_TOL, max_iter: int = NEWTON_MAX_ITER) -> NlseState:
    """
    Ground state at s = sigma by homotopy continuation from the linear problem
    :param a: Potential, strictly positive
    :param sigma: Final nonlinearity strength
    :param step: Homotopy increment, must divide sigma
    :param tol: Residual tolerance of every stage
    :param max_iter: Newton iterations per stage
    """
    return homotopy_path(a, sigma, step, tol, max_iter)[-1]


def variational_ground_state(a: Field, s: float, tol: float = 1e-9, max_iter: int = 50000,
                             initial: Optional[Field] = None) -> NlseState:
    """
    Ground state by projected gradient descent of nlse_energy on the sphere h^d sum u^2 = 1.

    Independent of the eigensolve/Newton path, so it serves as a cross-check of homotopy labels.
    Stops when the max-norm of the projected gradient (which equals the NLSE residual) is below tol.
    """
    check_positive(a)
    grid = a.grid
    av = a.values
    u = _normalize(np.ones(grid.shape) if initial is None else initial.values.copy(), grid)
    residual = np.inf
    e0 = 0.0
    for it in range(max_iter):
        hu = laplacian_values(u, grid.n) + av * u + s * u ** 3
        e0 = float(np.vdot(u, hu) / np.vdot(u, u))
        g = hu - e0 * u
        residual = float(np.max(np.abs(g)))
        if residual <= tol:
            break
        step = 1.0 / (4.0 * grid.d * grid.n ** 2 + av.max() + 3.0 * s * np.max(u ** 2))
        u = _normalize(u - step * g, grid)
    else:
        raise NotConverged('projected gradient did not reach residual %g' % tol,
                           best=NlseState(Field(u, grid), e0, s, residual, max_iter), s=s)
    return NlseState(Field(u, grid), e0, s, residual, it)
