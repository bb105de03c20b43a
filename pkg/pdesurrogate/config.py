"""
Declarative run configuration.

One json file describes a run::

    {
      "task": "elliptic",
      "grid": {"d": 2, "n": 8},
      "distribution": {"low": 0.3, "high": 3.0},
      "samples": {"train": 12000, "validation": 12000},
      "seed": 0,
      "solver": {"tol": 1e-10},
      "architecture": {"kind": "single_conv", "alpha": 16},
      "train": {"epochs": 200, "batch_size": 100},
      "theory": {"trials": 50, "c_values": [0.0, 0.2, 0.4]},
      "paths": {"train_data": "train.psd1", "checkpoint": "model.pdesurm1"}
    }

Every section but task, grid and distribution is optional. Unknown keys are rejected.
"""
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from .errors import ConfigError
from .fs.readers import read_json
from .grid import GridSpec
from .nn.network import NetworkSpec, build_1d_three_stage_arch, build_single_conv_arch
from .sampler import SamplingSpec, SolverSettings, Task
from .theory import TheoryConfig
from .train import TrainConfig

logger = logging.getLogger(__name__)

ARCHITECTURES = ('single_conv', 'three_stage')


@dataclass(frozen=True)
class ArchitectureConfig:
    kind: str = 'single_conv'
    alpha: int = 16
    width: int = 16
    stage_depth: int = 3

    def __post_init__(self):
        if self.kind not in ARCHITECTURES:
            raise ConfigError('architecture kind must be one of %s, got %r' % (ARCHITECTURES, self.kind))
        if self.alpha < 1 or self.width < 1 or self.stage_depth < 1:
            raise ConfigError('alpha, width and stage_depth must be positive')

    def build(self, grid: GridSpec) -> NetworkSpec:
        if self.kind == 'single_conv':
            return build_single_conv_arch(grid.n, grid.d, self.alpha)
        if grid.d != 1:
            raise ConfigError('the three stage architecture needs d = 1, got d=%d' % grid.d)
        return build_1d_three_stage_arch(grid.n, self.width, self.stage_depth)


@dataclass(frozen=True)
class PathsConfig:
    """Artifact locations; relative paths are taken from the config file's directory"""
    train_data: str = 'train.psd1'
    validation_data: str = 'validation.psd1'
    checkpoint: str = 'model.pdesurm1'
    metrics: str = 'metrics.csv'
    predictions: str = 'predictions.csv'
    report: str = 'theory.csv'
    curve: str = 'reciprocal.csv'
    table: Optional[str] = None

    def resolve(self, base_dir: str) -> 'PathsConfig':
        def fix(path):
            if path is None or os.path.isabs(path):
                return path
            return os.path.normpath(os.path.join(base_dir, os.path.expanduser(path)))
        return PathsConfig(**{f.name: fix(getattr(self, f.name)) for f in fields(self)})


@dataclass(frozen=True)
class RunConfig:
    task: Task
    grid: GridSpec
    low: float
    high: float
    train_count: int
    validation_count: int
    seed: int
    validation_seed: int
    solver: SolverSettings
    architecture: ArchitectureConfig
    train: TrainConfig
    theory: TheoryConfig
    paths: PathsConfig

    def sampling_spec(self, split: str = 'train') -> SamplingSpec:
        if split == 'train':
            return SamplingSpec(self.task, self.grid, self.low, self.high, self.train_count, self.seed)
        if split == 'validation':
            return SamplingSpec(self.task, self.grid, self.low, self.high, self.validation_count,
                                self.validation_seed)
        raise ValueError('unknown split %r' % (split,))

    def network(self) -> NetworkSpec:
        return self.architecture.build(self.grid)

    def to_dict(self):
        return {'task': self.task.label, 'grid': self.grid.to_dict(),
                'distribution': {'low': self.low, 'high': self.high},
                'samples': {'train': self.train_count, 'validation': self.validation_count},
                'seed': self.seed, 'validation_seed': self.validation_seed,
                'solver': asdict(self.solver), 'architecture': asdict(self.architecture),
                'train': self.train.to_dict(), 'theory': self.theory.to_dict()}

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical json of everything but the paths"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _section(data, name, cls, **defaults):
    raw = data.get(name, {})
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError('section %r must be an object' % name)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError('unknown key(s) in %r: %s' % (name, ', '.join(unknown)))
    values = dict(defaults)
    values.update(raw)
    try:
        return cls(**values)
    except TypeError as err:
        raise ConfigError('section %r: %s' % (name, err))
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError('section %r: %s' % (name, err))


_TOP_LEVEL = {'task', 'grid', 'distribution', 'samples', 'seed', 'validation_seed', 'solver',
              'architecture', 'train', 'theory', 'paths'}


def parse_config(data, base_dir: str = '.', seed: Optional[int] = None) -> RunConfig:
    """
    Validates a config dict
    :param data: Parsed json
    :param base_dir: Directory relative paths are resolved against
    :param seed: Optional override of the run seed (and with it the train and theory seeds)
    :raises ConfigError: on any validation failure
    """
    if not isinstance(data, dict):
        raise ConfigError('config must be a json object')
    unknown = sorted(set(data) - _TOP_LEVEL)
    if unknown:
        raise ConfigError('unknown top-level key(s): %s' % ', '.join(unknown))
    for key in ('task', 'grid', 'distribution'):
        if key not in data:
            raise ConfigError('config is missing %r' % key)
    try:
        task = Task.parse(data['task'])
        grid = _section(data, 'grid', GridSpec)
    except ValueError as err:
        raise ConfigError(str(err))
    dist = data['distribution']
    if not isinstance(dist, dict) or set(dist) != {'low', 'high'}:
        raise ConfigError('distribution needs exactly low and high')
    samples = data.get('samples', {})
    if set(samples) - {'train', 'validation'}:
        raise ConfigError('samples takes only train and validation')

    run_seed = int(data.get('seed', 0)) if seed is None else int(seed)
    if seed is None and data.get('validation_seed') is not None:
        validation_seed = int(data['validation_seed'])
    else:
        validation_seed = run_seed + 1
    train_defaults = {'seed': run_seed}
    theory_defaults = {'seed': run_seed, 'n': grid.n, 'd': grid.d}
    if 0 < float(dist['low']) <= float(dist['high']):
        # the noisy-GD checks need strictly positive coefficients
        theory_defaults.update(low=float(dist['low']), high=float(dist['high']))
    train = _section(data, 'train', TrainConfig, **train_defaults)
    theory = _section(data, 'theory', TheoryConfig, **theory_defaults)
    if seed is not None:
        train = replace(train, seed=run_seed)
        theory = replace(theory, seed=run_seed)

    config = RunConfig(task=task, grid=grid, low=float(dist['low']), high=float(dist['high']),
                       train_count=int(samples.get('train', 1000)),
                       validation_count=int(samples.get('validation', 1000)),
                       seed=run_seed, validation_seed=validation_seed,
                       solver=_section(data, 'solver', SolverSettings),
                       architecture=_section(data, 'architecture', ArchitectureConfig),
                       train=train, theory=theory,
                       paths=_section(data, 'paths', PathsConfig).resolve(base_dir))
    try:
        config.sampling_spec('train')
        config.sampling_spec('validation')
    except ValueError as err:
        raise ConfigError(str(err))
    logger.debug('config %s validated', config.config_hash[:12])
    return config


def load_config(path, seed: Optional[int] = None) -> RunConfig:
    """
    Reads and validates a json run config
    :param path: Path to the config file
    :param seed: Optional seed override
    """
    try:
        data = read_json(path)
    except (OSError, ValueError) as err:
        raise ConfigError('cannot read config %s: %s' % (path, err))
    return parse_config(data, os.path.dirname(os.path.abspath(os.path.expanduser(path))), seed)
