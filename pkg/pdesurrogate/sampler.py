"""
Random coefficient fields, labelled datasets, whitening statistics and dataset files.
"""
import enum
import logging
import multiprocessing
import os
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from tqdm import tqdm

from . import __version__
from .elliptic import DEFAULT_TOL, harmonic_mean_1d, solve_cell_problem
from .errors import DatasetFormatError, DatasetGenerationError, ShapeMismatch, SolverError, \
    ZeroVariance
from .fs.binary import read_dataset, write_dataset
from .fs.readers import read_json
from .fs.savers import AutoSaveJson
from .grid import Direction, Field, GridSpec
from .nlse import DEFAULT_SIGMA, DEFAULT_STEP, NEWTON_MAX_ITER, ground_state_homotopy

logger = logging.getLogger(__name__)


class Task(enum.IntEnum):
    """
    What a coefficient field is labelled with.

    HARMONIC labels 1D fields with the nodal harmonic mean, the closed form the three stage
    architecture is built to reproduce.
    """
    ELLIPTIC = 1
    NLSE = 2
    HARMONIC = 3

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        aliases = {'elliptic': cls.ELLIPTIC, 'ellipticconductance': cls.ELLIPTIC,
                   'nlse': cls.NLSE, 'nlsegroundstate': cls.NLSE,
                   'harmonic': cls.HARMONIC, 'harmonicmean': cls.HARMONIC}
        try:
            return aliases[str(name).replace('_', '').replace('-', '').lower()]
        except KeyError:
            raise ValueError('unknown task %r, expected elliptic, nlse or harmonic' % (name,))

    @property
    def label(self):
        return self.name.lower()


@dataclass(frozen=True)
class SolverSettings:
    """Label solver parameters; recorded with every dataset so labels are reproducible"""
    tol: float = DEFAULT_TOL
    max_iter: Optional[int] = None
    sigma: float = DEFAULT_SIGMA
    step: float = DEFAULT_STEP
    newton_max_iter: int = NEWTON_MAX_ITER

    def metadata(self, task: Task) -> Dict:
        meta = {'tol': self.tol, 'package_version': __version__}
        if task is Task.ELLIPTIC:
            meta.update(solver='projected-cg', direction='e1', max_iter=self.max_iter)
        elif task is Task.HARMONIC:
            meta.update(solver='nodal-harmonic-mean')
        else:
            meta.update(solver='inverse-iteration+newton-homotopy', sigma=self.sigma,
                        step=self.step, newton_max_iter=self.newton_max_iter)
        return meta


@dataclass(frozen=True)
class SamplingSpec:
    """
    i.i.d. uniform coefficient fields on a grid.

    low == high is allowed and yields constant fields.
    """
    task: Task
    grid: GridSpec
    low: float
    high: float
    count: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, 'task', Task.parse(self.task))
        if not self.low <= self.high:
            raise ValueError('need low <= high, got [%r, %r]' % (self.low, self.high))
        if self.task is not Task.NLSE and self.low <= 0:
            raise ValueError('conductances need low > 0, got %r' % (self.low,))
        if self.task is Task.HARMONIC and self.grid.d != 1:
            raise ValueError('harmonic mean labels need d = 1, got d=%d' % self.grid.d)
        if self.count <= 0:
            raise ValueError('count must be positive, got %r' % (self.count,))
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError('seed must be an unsigned 64-bit integer, got %r' % (self.seed,))


@dataclass(frozen=True)
class WhitenStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'mean', np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, 'std', np.asarray(self.std, dtype=np.float64))
        if np.any(self.std <= 0):
            raise ZeroVariance(np.flatnonzero(self.std <= 0))


@dataclass(eq=False)
class Dataset:
    """
    Labelled samples in index order.

    :ivar inputs: (count, n^d) coefficient fields, row-major flattened
    :ivar targets: (count,) A_eff or E_0 labels
    """
    spec: SamplingSpec
    inputs: np.ndarray
    targets: np.ndarray
    solver_metadata: Dict = field(default_factory=dict)
    whiten: Optional[WhitenStats] = None

    def __len__(self):
        return self.targets.shape[0]

    def coefficient(self, index: int) -> Field:
        return Field.from_vector(self.spec.grid, self.inputs[index])

    def target_summary(self) -> Tuple[float, float]:
        """Sample mean and population standard deviation of the targets"""
        return float(np.mean(self.targets)), float(np.std(self.targets))


def _generator(seed: int, index: int) -> np.random.Generator:
    # Philox is counter based; keying on (seed, index) makes a sample's stream independent of
    # which worker draws it and in what order
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def sample_field(spec: SamplingSpec, index: int) -> Field:
    """
    Coefficient field number index of the sampling spec
    :param spec: SamplingSpec
    :param index: 0 <= index < spec.count
    :return: Field with i.i.d. U[low, high] entries
    """
    if not 0 <= index < spec.count:
        raise IndexError('sample index %d outside [0, %d)' % (index, spec.count))
    if spec.low == spec.high:
        return Field.constant(spec.grid, spec.low)
    values = _generator(spec.seed, index).uniform(spec.low, spec.high, size=spec.grid.size)
    return Field.from_vector(spec.grid, values)


def label_field(task: Task, a: Field, settings: SolverSettings) -> float:
    """
    Ground truth for one coefficient field
    :return: A_eff(a) for the elliptic task, E_0(a) for the NLSE task and the nodal harmonic mean
        for the harmonic task
    """
    if task is Task.HARMONIC:
        return harmonic_mean_1d(a)
    if task is Task.ELLIPTIC:
        return solve_cell_problem(a, Direction.canonical(a.grid.d), settings.tol,
                                  settings.max_iter).a_eff
    return ground_state_homotopy(a, settings.sigma, settings.step, settings.tol,
                                 settings.newton_max_iter).e0


def _label_sample(job):
    spec, settings, index = job
    a = sample_field(spec, index)
    try:
        return index, a.vector, label_field(spec.task, a, settings), None
    except SolverError as err:
        return index, a.vector, np.nan, '%s: %s' % (type(err).__name__, err)


def generate_dataset(spec: SamplingSpec, workers: int = 1,
                     settings: Optional[SolverSettings] = None, progress: bool = False) -> Dataset:
    """
    Samples and labels spec.count fields.
    Output order is index order and the result is identical for any number of workers.

    :param spec: SamplingSpec
    :param workers: Number of worker processes, 1 labels in-process
    :param settings: Optional label solver settings
    :param progress: Show a tqdm progress bar
    :raises DatasetGenerationError: listing every index whose solve failed
    """
    settings = SolverSettings() if settings is None else settings
    jobs = ((spec, settings, index) for index in range(spec.count))
    inputs = np.empty((spec.count, spec.grid.size))
    targets = np.empty(spec.count)
    failures = {}
    started = time.time()
    bar = dict(total=spec.count, disable=not progress, desc='labelling %s' % spec.task.label)
    if workers <= 1:
        results = map(_label_sample, jobs)
        for index, vector, target, error in tqdm(results, **bar):
            inputs[index], targets[index] = vector, target
            if error is not None:
                failures[index] = error
    else:
        chunksize = max(1, min(64, spec.count // (4 * workers)))
        with multiprocessing.Pool(processes=workers) as pool:
            results = pool.imap(_label_sample, jobs, chunksize=chunksize)
            for index, vector, target, error in tqdm(results, **bar):
                inputs[index], targets[index] = vector, target
                if error is not None:
                    failures[index] = error
    if failures:
        for index in sorted(failures)[:10]:
            logger.error('sample %d failed: %s', index, failures[index])
        raise DatasetGenerationError(failures)
    logger.info('labelled %d %s samples on a %d^%d grid in %.1fs', spec.count, spec.task.label,
                spec.grid.n, spec.grid.d, time.time() - started)
    return Dataset(spec, inputs, targets, settings.metadata(spec.task))


def compute_whiten_stats(train_inputs: np.ndarray) -> WhitenStats:
    """
    Per-dimension mean and population standard deviation of the training inputs
    :param train_inputs: (count, n^d) array, count >= 2
    :raises ZeroVariance: if a dimension is constant
    """
    train_inputs = np.asarray(train_inputs, dtype=np.float64)
    if train_inputs.ndim != 2 or train_inputs.shape[0] < 2:
        raise ValueError('whitening needs at least 2 training samples')
    return WhitenStats(train_inputs.mean(axis=0), train_inputs.std(axis=0))


def apply_whitening(inputs, stats: WhitenStats) -> np.ndarray:
    """
    (x - mean) / std per dimension
    :param inputs: A Field, a flat vector or a (count, n^d) array
    :param stats: WhitenStats of the training split
    :return: Whitened array of the same shape as the flat input
    """
    values = inputs.vector if isinstance(inputs, Field) else np.asarray(inputs, dtype=np.float64)
    if values.shape[-1:] != stats.mean.shape:
        raise ShapeMismatch('inputs of width %s, whitening statistics of width %d'
                            % (values.shape[-1:], stats.mean.shape[0]))
    return (values - stats.mean) / stats.std


def unwhiten(inputs, stats: WhitenStats) -> np.ndarray:
    return np.asarray(inputs, dtype=np.float64) * stats.std + stats.mean


def save_dataset(dataset: Dataset, path, sidecar=True, extra=None):
    """
    Writes a dataset as PSD1 plus an optional human readable json sidecar (path + '.json')
    :param dataset: The dataset
    :param path: Path of the binary file
    :param sidecar: Write the json sidecar
    :param extra: Optional dict merged into the sidecar, i.e. the config hash
    """
    spec = dataset.spec
    header = dict(task=int(spec.task), d=spec.grid.d, n=spec.grid.n, low=spec.low,
                  high=spec.high, seed=spec.seed, tol=dataset.solver_metadata.get('tol', 0.0))
    records = np.hstack([dataset.inputs, dataset.targets[:, None]])
    whiten = None if dataset.whiten is None else (dataset.whiten.mean, dataset.whiten.std)
    write_dataset(path, header, records, whiten)
    if sidecar:
        mean, std = dataset.target_summary()
        with AutoSaveJson(str(path) + '.json') as meta:
            meta.update(format='PSD1', task=spec.task.label, d=spec.grid.d, n=spec.grid.n,
                        low=spec.low, high=spec.high, count=spec.count, seed=spec.seed,
                        solver=dataset.solver_metadata, target_mean=mean, target_std=std,
                        whitened=dataset.whiten is not None,
                        written=time.strftime('%Y-%m-%dT%H:%M:%S'))
            meta.update(extra or {})
    logger.info('wrote %d samples to %s', len(dataset), path)


def load_dataset(path) -> Dataset:
    """
    Reads a PSD1 dataset. The solver metadata comes from the json sidecar when there is one,
    otherwise only the tolerance stored in the binary header is known.
    :param path: Path of the binary file
    :raises DatasetFormatError: on a malformed file, an empty dataset or a sidecar that does not
        describe the binary file
    """
    header, records, whiten = read_dataset(path)
    if header['count'] == 0:
        raise DatasetFormatError('%s holds no samples' % path)
    try:
        spec = SamplingSpec(Task(header['task']), GridSpec(header['d'], header['n']),
                            header['low'], header['high'], header['count'], header['seed'])
    except ValueError as err:
        raise DatasetFormatError('%s has an invalid header: %s' % (path, err))
    stats = None if whiten is None else WhitenStats(*whiten)
    return Dataset(spec, records[:, :-1].copy(), records[:, -1].copy(),
                   _load_solver_metadata(path, spec, header['tol']), stats)


def _load_solver_metadata(path, spec: SamplingSpec, tol: float) -> Dict:
    sidecar = str(path) + '.json'
    if not os.path.exists(sidecar):
        return {'tol': tol}
    try:
        meta = read_json(sidecar)
    except ValueError as err:
        raise DatasetFormatError('%s is not valid json: %s' % (sidecar, err))
    if not isinstance(meta, dict):
        raise DatasetFormatError('%s is not a json object' % sidecar)
    described = (meta.get('task'), meta.get('d'), meta.get('n'), meta.get('count'), meta.get('seed'))
    if described != (spec.task.label, spec.grid.d, spec.grid.n, spec.count, spec.seed):
        raise DatasetFormatError('%s describes a different dataset than %s' % (sidecar, path))
    solver = dict(meta.get('solver') or {})
    solver.setdefault('tol', tol)
    return solver
