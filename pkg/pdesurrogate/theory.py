"""
Numerical checks of the noisy gradient-descent argument behind the surrogate's representability:
spectral constants of L_a, the noisy iteration

    u^{m+1} = v^m - dt grad E(v^m),    v^{m+1} = u^{m+1} + dt eps^{m+1},

its sufficient-descent inequality and its O(1/M) energy gap.

E is the cell-problem energy of grid.energy, so grad E = h^d (L_a v - b_a) and its Hessian on the
mean-zero subspace is h^d L_a. Step sizes handed to noisy_gd are in these units, i.e. the bound of
max_step(c, lambda_a) divided by h^d.
"""
import enum
import logging
import multiprocessing
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .elliptic import conjugate_gradient, project_mean_zero, solve_cell_problem
from .errors import ConfigError, InvalidNoiseLevel, NotConverged
from .fs.savers import AutoSaveCsv
from .grid import DiffusionStencil, Direction, Field, GridSpec, check_positive, resolve_direction, \
    stencil_energy

logger = logging.getLogger(__name__)

DEFAULT_MS = tuple(2 ** k for k in range(4, 13))
POWER_TOL = 1e-8
BLOCK_SIZE = 6


class NoiseMode(enum.Enum):
    WORST_CASE = 'worst_case_scaled'
    UNIFORM = 'uniform_scaled'
    ZERO = 'zero'


@dataclass(frozen=True)
class NoisyGdConfig:
    """
    :ivar c: Relative noise level, ||eps|| <= c ||grad E||
    :ivar dt: Step size in the units of grad E
    :ivar steps: Iteration count M
    :ivar noise_mode: How ||eps|| is chosen within the bound
    """
    c: float
    dt: float
    steps: int
    noise_mode: NoiseMode = NoiseMode.WORST_CASE

    def __post_init__(self):
        object.__setattr__(self, 'noise_mode', NoiseMode(self.noise_mode))
        if not 0.0 <= self.c < 1.0:
            raise InvalidNoiseLevel('relative noise level must lie in [0, 1), got %r' % (self.c,))
        if not self.dt > 0:
            raise ValueError('step size must be positive, got %r' % (self.dt,))
        if self.steps < 0:
            raise ValueError('iteration count must be non-negative, got %r' % (self.steps,))


@dataclass(frozen=True)
class SpectralConstants:
    """
    :ivar lambda_a: ||L_a||_2
    :ivar mu_a: Smallest nonzero eigenvalue of L_a, 1 / ||L_a^+||_2
    :ivar lambda_a_prime: (1 + c^2 / (1 - c)) lambda_a
    """
    lambda_a: float
    mu_a: float
    lambda_a_prime: float
    c: float = 0.0


@dataclass(eq=False)
class Trajectory:
    """
    Iterates v^0 = 0, ..., v^M as rows of ``iterates`` (flattened fields) with their energies and
    gradient norms.
    """
    iterates: np.ndarray
    energies: np.ndarray
    grad_norms: np.ndarray
    noise_norms: np.ndarray
    config: NoisyGdConfig

    def __len__(self):
        return self.energies.shape[0]

    def descent_violations(self, slack: float = 1e-12) -> List[int]:
        """Steps m with E(v^{m+1}) - E(v^m) > -(dt/2) ||grad E(v^m)||^2 + slack max(1, |E(v^m)|)"""
        drop = np.diff(self.energies)
        bound = -0.5 * self.config.dt * self.grad_norms[:-1] ** 2
        tol = slack * np.maximum(1.0, np.abs(self.energies[:-1]))
        return [int(m) for m in np.flatnonzero(drop > bound + tol)]

    def max_mean_abs(self) -> float:
        return float(np.max(np.abs(self.iterates.sum(axis=1))))


def lambda_a_prime(c: float, lambda_a: float) -> float:
    return (1.0 + c * c / (1.0 - c)) * lambda_a


def max_step(c: float, lambda_a: float) -> float:
    """
    Largest step delta = (1 - 1/(2(1 - c))) 2 / lambda_a' for which every noisy step descends by
    at least (dt/2) ||grad E||^2.
    :raises InvalidNoiseLevel: if c is outside [0, 1/2)
    """
    if not 0.0 <= c < 0.5:
        raise InvalidNoiseLevel('the descent step bound needs 0 <= c < 1/2, got %r' % (c,))
    if not lambda_a > 0:
        raise ValueError('lambda_a must be positive, got %r' % (lambda_a,))
    return (1.0 - 1.0 / (2.0 * (1.0 - c))) * 2.0 / lambda_a_prime(c, lambda_a)


def _start_block(grid: GridSpec, size: int, seed: int) -> np.ndarray:
    """Orthonormal mean-zero rows, each a flattened field"""
    x = np.random.default_rng(seed).standard_normal((size, grid.size))
    x -= x.mean(axis=1, keepdims=True)
    return np.linalg.qr(x.T)[0].T


def _block_size(grid: GridSpec, block: int) -> int:
    # the mean-zero subspace has dimension n^d - 1
    return max(1, min(int(block), grid.size - 1))


def _rayleigh_ritz(stencil: DiffusionStencil, q: np.ndarray):
    """Ritz values (ascending), Ritz vectors and their images under L_a, all as rows"""
    shape = stencil.grid.shape
    lq = np.stack([stencil.apply(row.reshape(shape)).ravel() for row in q])
    h = q @ lq.T
    theta, s = np.linalg.eigh(0.5 * (h + h.T))
    return theta, s.T @ q, s.T @ lq


def largest_eigenvalue(stencil: DiffusionStencil, tol: float = POWER_TOL, max_iter: int = 20000,
                       seed: int = 0, block: int = BLOCK_SIZE) -> float:
    """
    ||L_a||_2 by block power iteration with Rayleigh-Ritz extraction, stopped on
    ||L x - lambda x|| <= tol lambda for the top Ritz pair.
    The block keeps clustered top eigenvalues from stalling the iteration.
    :raises NotConverged: with the last Ritz value as ``best``
    """
    grid = stencil.grid
    q = _start_block(grid, _block_size(grid, block), seed)
    lam, residual = 0.0, np.inf
    for it in range(1, max_iter + 1):
        theta, ritz, lritz = _rayleigh_ritz(stencil, q)
        lam = float(theta[-1])
        residual = float(np.linalg.norm(lritz[-1] - lam * ritz[-1]))
        if residual <= tol * lam:
            logger.debug('power iteration: lambda_a %.12g after %d iterations', lam, it)
            return lam
        q = np.linalg.qr(lritz.T)[0].T
    raise NotConverged('power iteration did not converge', best=lam, residual=residual / lam)


def smallest_nonzero_eigenvalue(stencil: DiffusionStencil, tol: float = POWER_TOL,
                                max_iter: int = 2000, seed: int = 1,
                                block: int = BLOCK_SIZE) -> float:
    """
    Smallest eigenvalue of L_a on the mean-zero subspace by block inverse iteration with
    Rayleigh-Ritz extraction, every solve done by projected CG.
    Nearly equal low eigenvalues share the block, so their gap does not set the rate.
    :raises NotConverged: with the last Ritz value as ``best``
    """
    grid = stencil.grid
    q = _start_block(grid, _block_size(grid, block), seed)
    mu, residual = 0.0, np.inf
    for it in range(1, max_iter + 1):
        theta, ritz, lritz = _rayleigh_ritz(stencil, q)
        mu = float(theta[0])
        residual = float(np.linalg.norm(project_mean_zero(lritz[0]) - mu * ritz[0]))
        if residual <= tol * mu:
            logger.debug('inverse iteration: mu_a %.12g after %d iterations', mu, it)
            return mu
        solved = [conjugate_gradient(stencil.apply, row.reshape(grid.shape), 1e-12,
                                     10 * grid.size, project=project_mean_zero).x.ravel()
                  for row in ritz]
        y = np.stack(solved)
        y -= y.mean(axis=1, keepdims=True)
        q = np.linalg.qr(y.T)[0].T
    raise NotConverged('inverse iteration did not converge', best=mu, residual=residual / mu)


def spectral_constants(a: Field, c: float = 0.0, tol: float = POWER_TOL,
                       seed: int = 0) -> SpectralConstants:
    """
    lambda_a, mu_a and lambda_a' of L_a
    :param a: Coefficient field, strictly positive
    :param c: Relative noise level entering lambda_a'
    :param tol: Relative eigen-residual tolerance
    :param seed: Seed of the (deterministic) start vectors
    """
    check_positive(a)
    if not 0.0 <= c < 1.0:
        raise InvalidNoiseLevel('relative noise level must lie in [0, 1), got %r' % (c,))
    stencil = DiffusionStencil(a)
    lam = largest_eigenvalue(stencil, tol, seed=seed)
    mu = smallest_nonzero_eigenvalue(stencil, tol, seed=seed + 1)
    return SpectralConstants(lam, mu, lambda_a_prime(c, lam), c)


def _noise(gradient: np.ndarray, grad_norm: float, config: NoisyGdConfig,
           rng: np.random.Generator) -> np.ndarray:
    if config.noise_mode is NoiseMode.ZERO or config.c == 0.0:
        return np.zeros_like(gradient)
    z = project_mean_zero(rng.standard_normal(gradient.shape))
    scale = config.c * grad_norm
    if config.noise_mode is NoiseMode.UNIFORM:
        scale = rng.uniform(0.0, scale)
    z_norm = np.linalg.norm(z)
    if z_norm == 0.0 or scale == 0.0:
        return np.zeros_like(gradient)
    return (scale / z_norm) * z


def noisy_gd(a: Field, config: NoisyGdConfig, rng: np.random.Generator,
             xi: Optional[Direction] = None) -> Trajectory:
    """
    Runs the noisy iteration from v^0 = 0 for config.steps steps.
    Noise is a Gaussian vector with its mean projected out, rescaled to c ||grad E(v^m)|| for the
    worst case or to a U[0, c ||grad E(v^m)||] length for the uniform mode.
    """
    check_positive(a)
    grid = a.grid
    xi = resolve_direction(grid, xi)
    stencil = DiffusionStencil(a)
    b = stencil.rhs(xi)
    hd = grid.cell_volume
    steps = config.steps
    iterates = np.empty((steps + 1, grid.size))
    energies = np.empty(steps + 1)
    grad_norms = np.empty(steps + 1)
    noise_norms = np.zeros(steps + 1)
    v = np.zeros(grid.shape)
    for m in range(steps + 1):
        gradient = hd * (stencil.apply(v) - b)
        iterates[m] = v.ravel()
        energies[m] = stencil_energy(stencil, v, xi, rhs=b)
        grad_norms[m] = np.linalg.norm(gradient)
        if m == steps:
            break
        eps = _noise(gradient, grad_norms[m], config, rng)
        noise_norms[m + 1] = np.linalg.norm(eps)
        v = v - config.dt * gradient + config.dt * eps
    return Trajectory(iterates, energies, grad_norms, noise_norms, config)


def convergence_bound_constant(dist_sq: float, dt: float, c: float, mu: float,
                           initial_gap: float) -> float:
    """
    C of the bound E(v^M) - E(u*) <= C / M,
    C = ||v^0 - u*||^2 / (2 dt) + (2c / dt)(c dt + 2(1 + 2/mu))(E(v^0) - E(u*)),
    with mu the strong convexity constant of E in the same units as dt.
    """
    return dist_sq / (2.0 * dt) + (2.0 * c / dt) * (c * dt + 2.0 * (1.0 + 2.0 / mu)) * initial_gap


@dataclass(eq=False)
class ConvergenceReport:
    """
    Energy gaps of one trajectory at the sampled iteration counts.

    :ivar slope: Fitted slope of log gap against log M over gaps above the round-off floor;
        -inf when fewer than two gaps are above it
    :ivar c_fit: Smallest C with gap(M) <= C / M over the smaller half of the sampled M
    :ivar fit_ok: c_fit / M still bounds the gaps of the larger half
    :ivar c_bound: The explicit constant of convergence_bound_constant
    """
    ms: Tuple[int, ...]
    gaps: Tuple[float, ...]
    slope: float
    c_fit: float
    c_bound: float
    energy_star: float
    initial_gap: float
    descent_violations: List[int]
    max_mean_abs: float
    monotone: bool
    bound_ok: bool
    fit_ok: bool
    grad_sum_ok: bool
    strong_convexity_ok: bool
    trajectory: Trajectory = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return (not self.descent_violations and self.monotone and self.bound_ok and self.fit_ok
                and self.grad_sum_ok and self.strong_convexity_ok and self.max_mean_abs <= 1e-9)


def verify_convergence_rate(a: Field, config: NoisyGdConfig, rng: np.random.Generator,
                            ms: Sequence[int] = DEFAULT_MS, mu_a: Optional[float] = None,
                            xi: Optional[Direction] = None, slack: float = 1e-12) -> ConvergenceReport:
    """
    Runs one trajectory of length max(ms) and compares E(v^M) with E(u*), u* from the cell
    problem solved at tolerance 1e-12.
    :param a: Coefficient field
    :param config: Noise level, step and mode; config.steps is replaced by max(ms)
    :param rng: Noise generator
    :param ms: Iteration counts to sample
    :param mu_a: Smallest nonzero eigenvalue of L_a, computed when omitted
    :param xi: Direction, defaults to e_1
    :param slack: Relative slack of every inequality
    """
    ms = tuple(sorted(int(m) for m in ms))
    if not ms or ms[0] < 1:
        raise ValueError('iteration counts must be positive')
    grid = a.grid
    xi = resolve_direction(grid, xi)
    if mu_a is None:
        mu_a = smallest_nonzero_eigenvalue(DiffusionStencil(a))
    mu = grid.cell_volume * mu_a
    run = NoisyGdConfig(config.c, config.dt, ms[-1], config.noise_mode)
    trajectory = noisy_gd(a, run, rng, xi)

    u_star = solve_cell_problem(a, xi, tol=1e-12).u.vector
    e_star = stencil_energy(DiffusionStencil(a), u_star.reshape(grid.shape), xi)
    scale = max(1.0, abs(e_star))
    initial_gap = float(trajectory.energies[0] - e_star)
    dist_sq = float(np.vdot(u_star, u_star))

    gaps = np.array([trajectory.energies[m] - e_star for m in ms])
    floor = 1e3 * np.finfo(float).eps * scale
    mask = gaps > floor
    if np.count_nonzero(mask) >= 2:
        slope = float(np.polyfit(np.log(np.array(ms)[mask]), np.log(gaps[mask]), 1)[0])
    else:
        slope = float('-inf')
    m_values = np.array(ms, dtype=np.float64)
    split = max(1, len(ms) // 2)
    c_fit = float(np.max(m_values[:split] * np.maximum(gaps[:split], 0.0)))
    c_bound = convergence_bound_constant(dist_sq, run.dt, run.c, mu, initial_gap)
    tol = slack * scale
    bound_ok = bool(np.all(gaps <= c_bound / m_values + tol))
    fit_ok = bool(np.all(gaps[split:] <= c_fit / m_values[split:] + tol))
    monotone = bool(np.all(np.diff(trajectory.energies) <= tol))
    grad_sum = 0.5 * run.dt * float(np.sum(trajectory.grad_norms[:-1] ** 2))
    grad_sum_ok = grad_sum <= initial_gap + tol
    strong_convexity_ok = initial_gap >= 0.5 * mu * dist_sq - tol
    return ConvergenceReport(ms, tuple(float(g) for g in gaps), slope, c_fit, c_bound, e_star,
                             initial_gap, trajectory.descent_violations(slack),
                             trajectory.max_mean_abs(), monotone, bound_ok, fit_ok, grad_sum_ok,
                             strong_convexity_ok, trajectory)


@dataclass(frozen=True)
class TheoryConfig:
    """
    Random-field trials of the noisy iteration.

    :ivar dt_fraction: Step as a fraction of the descent bound
    :ivar ms: Iteration counts at which the energy gap is sampled
    """
    trials: int = 50
    n: int = 8
    d: int = 2
    low: float = 0.3
    high: float = 3.0
    c_values: Tuple[float, ...] = (0.0, 0.2, 0.4)
    dt_fraction: float = 0.9
    ms: Tuple[int, ...] = DEFAULT_MS
    noise_mode: str = NoiseMode.WORST_CASE.value
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'c_values', tuple(float(c) for c in self.c_values))
        object.__setattr__(self, 'ms', tuple(int(m) for m in self.ms))
        if self.trials < 1:
            raise ConfigError('trials must be at least 1')
        if not 0 < self.low <= self.high:
            raise ConfigError('need 0 < low <= high, got [%r, %r]' % (self.low, self.high))
        if any(not 0.0 <= c <= 0.45 for c in self.c_values) or not self.c_values:
            raise ConfigError('noise levels must lie in [0, 0.45], got %r' % (self.c_values,))
        if not 0 < self.dt_fraction <= 1:
            raise ConfigError('dt_fraction must lie in (0, 1], got %r' % (self.dt_fraction,))
        if not self.ms or min(self.ms) < 1:
            raise ConfigError('iteration counts must be positive, got %r' % (self.ms,))
        try:
            NoiseMode(self.noise_mode)
            GridSpec(self.d, self.n)
        except ValueError as err:
            raise ConfigError(str(err))

    def to_dict(self):
        return {'trials': self.trials, 'n': self.n, 'd': self.d, 'low': self.low,
                'high': self.high, 'c_values': list(self.c_values),
                'dt_fraction': self.dt_fraction, 'ms': list(self.ms),
                'noise_mode': self.noise_mode, 'seed': self.seed}


@dataclass(frozen=True)
class TrialResult:
    trial: int
    n: int
    c: float
    dt: float
    delta: float
    steps: int
    lambda_a: float
    mu_a: float
    report: ConvergenceReport

    def row(self) -> Dict:
        report = self.report
        row = dict(trial=self.trial, n=self.n, c=self.c, dt=repr(self.dt), delta=repr(self.delta),
                   steps=self.steps, lambda_a=repr(self.lambda_a), mu_a=repr(self.mu_a),
                   descent_violations=len(report.descent_violations),
                   max_mean_abs=repr(report.max_mean_abs), slope=repr(report.slope),
                   c_fit=repr(report.c_fit), c_bound=repr(report.c_bound),
                   bound_ok=int(report.bound_ok), fit_ok=int(report.fit_ok),
                   monotone=int(report.monotone),
                   grad_sum_ok=int(report.grad_sum_ok),
                   strong_convexity_ok=int(report.strong_convexity_ok))
        for m, gap in zip(report.ms, report.gaps):
            row['gap_%d' % m] = repr(gap)
        return row


def _trial_generator(seed: int, trial: int, c_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial, c_index])))


def trial_field(config: TheoryConfig, trial: int) -> Field:
    """Coefficient field of a trial, shared by every noise level"""
    rng = _trial_generator(config.seed, trial, 2 ** 32 - 1)
    grid = GridSpec(config.d, config.n)
    return Field.from_vector(grid, rng.uniform(config.low, config.high, size=grid.size))


def run_trial(config: TheoryConfig, trial: int, c_index: int) -> TrialResult:
    c = config.c_values[c_index]
    a = trial_field(config, trial)
    constants = spectral_constants(a, c)
    # the Hessian of E is h^d L_a, so the bound scales by 1/h^d
    delta = max_step(c, constants.lambda_a) / a.grid.cell_volume
    dt = config.dt_fraction * delta
    gd = NoisyGdConfig(c, dt, max(config.ms), NoiseMode(config.noise_mode))
    report = verify_convergence_rate(a, gd, _trial_generator(config.seed, trial, c_index),
                                     config.ms, mu_a=constants.mu_a)
    return TrialResult(trial, config.n, c, dt, delta, gd.steps, constants.lambda_a,
                       constants.mu_a, report)


def _run_job(job):
    result = run_trial(*job)
    # trajectories stay in the worker
    result.report.trajectory = None
    return result


def run_trials(config: TheoryConfig, workers: int = 1, progress: bool = False) -> List[TrialResult]:
    """
    Every (trial, noise level) pair, in that order. Results do not depend on workers.
    """
    jobs = [(config, trial, ci) for trial in range(config.trials)
            for ci in range(len(config.c_values))]
    bar = dict(total=len(jobs), disable=not progress, desc='theory trials')
    if workers <= 1:
        results = list(tqdm(map(_run_job, jobs), **bar))
    else:
        with multiprocessing.Pool(processes=workers) as pool:
            results = list(tqdm(pool.imap(_run_job, jobs), **bar))
    failing = [r for r in results if not r.report.ok]
    for result in failing[:10]:
        logger.warning('trial %d at c=%.2f: %d descent violations, bound_ok=%s, monotone=%s',
                       result.trial, result.c, len(result.report.descent_violations),
                       result.report.bound_ok, result.report.monotone)
    logger.info('%d of %d theory trials passed every check', len(results) - len(failing),
                len(results))
    return results


def write_report(results: Sequence[TrialResult], path, comments=None):
    """Verification report, one csv row per (trial, noise level)"""
    if not results:
        raise ValueError('no trial results to write')
    rows = [r.row() for r in results]
    with AutoSaveCsv(path, list(rows[0]), comments=comments) as out:
        out.extend(rows)
