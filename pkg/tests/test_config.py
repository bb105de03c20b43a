import json

import pytest

from pdesurrogate.config import load_config, parse_config
from pdesurrogate.errors import ConfigError
from pdesurrogate.grid import GridSpec
from pdesurrogate.nn.network import param_count
from pdesurrogate.sampler import Task


def _raw(**overrides):
    data = {'task': 'elliptic', 'grid': {'d': 2, 'n': 8},
            'distribution': {'low': 0.3, 'high': 3.0},
            'samples': {'train': 200, 'validation': 100}, 'seed': 7}
    data.update(overrides)
    return data


def test_minimal_config_defaults():
    config = parse_config(_raw(), '/runs/a')
    assert config.task is Task.ELLIPTIC
    assert config.grid == GridSpec(2, 8)
    assert config.seed == 7 and config.validation_seed == 8
    assert config.train.seed == 7 and config.theory.seed == 7
    assert (config.theory.n, config.theory.d, config.theory.low) == (8, 2, 0.3)
    assert config.paths.checkpoint == '/runs/a/model.pdesurm1'
    assert param_count(config.network()) == 1057


def test_split_specs():
    config = parse_config(_raw(validation_seed=99))
    train, validation = config.sampling_spec('train'), config.sampling_spec('validation')
    assert (train.count, train.seed) == (200, 7)
    assert (validation.count, validation.seed) == (100, 99)
    with pytest.raises(ValueError):
        config.sampling_spec('test')


def test_seed_override_moves_every_seed():
    config = parse_config(_raw(validation_seed=99, train={'seed': 3}), seed=11)
    assert config.seed == 11
    assert config.validation_seed == 12
    assert config.train.seed == 11 and config.theory.seed == 11


@pytest.mark.parametrize('data', [
    _raw(colour='blue'),
    _raw(train={'learning_rate': 1e-3, 'momentum': 0.9}),
    _raw(train={'batch_size': 20}),
    _raw(architecture={'kind': 'transformer'}),
    _raw(grid={'d': 2, 'n': 1}),
    _raw(distribution={'low': 0.3}),
    _raw(distribution={'low': 0.0, 'high': 3.0}),
    _raw(task='heat'),
    _raw(task='harmonic'),
    _raw(theory={'c_values': [0.2, 0.6]}),
    _raw(paths=['model.pdesurm1']),
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_three_stage_needs_one_dimension():
    with pytest.raises(ConfigError):
        parse_config(_raw(architecture={'kind': 'three_stage'})).network()
    config = parse_config(_raw(grid={'d': 1, 'n': 8}, architecture={'kind': 'three_stage'}))
    assert param_count(config.network()) == 2 * 321
    harmonic = parse_config(_raw(task='harmonic', grid={'d': 1, 'n': 8},
                                 distribution={'low': 0.3, 'high': 1.5}))
    assert harmonic.sampling_spec().task is Task.HARMONIC
    assert harmonic.to_dict()['task'] == 'harmonic'


def test_nlse_config_allows_zero_potential():
    config = parse_config(_raw(task='nlse', distribution={'low': 0.0, 'high': 16.0}))
    assert config.task is Task.NLSE
    assert config.theory.low == 0.3


def test_config_hash_ignores_paths_and_key_order():
    base = parse_config(_raw())
    moved = parse_config(_raw(paths={'checkpoint': 'elsewhere.pdesurm1'}), '/tmp')
    reordered = parse_config(dict(reversed(list(_raw().items()))))
    assert base.config_hash == moved.config_hash == reordered.config_hash
    assert len(base.config_hash) == 64
    assert parse_config(_raw(seed=8)).config_hash != base.config_hash


def test_load_config_resolves_against_the_file(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps(_raw(paths={'metrics': 'out/metrics.csv'})))
    config = load_config(str(path))
    assert config.paths.metrics == str(tmp_path / 'out' / 'metrics.csv')
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{"task": ')
    with pytest.raises(ConfigError):
        load_config(str(bad))
