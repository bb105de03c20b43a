import numpy as np
import pytest
from numpy.testing import assert_array_equal

from pdesurrogate.elliptic import half_grid_harmonic_mean_1d
from pdesurrogate.errors import ConfigError, GridMismatch, ZeroTargetNorm
from pdesurrogate.grid import Field, GridSpec
from pdesurrogate.nn.network import (build_1d_three_stage_arch, build_single_conv_arch,
                                    extract_stage1_response, fit_reciprocal)
from pdesurrogate.sampler import (Dataset, SamplingSpec, Task, apply_whitening,
                                  compute_whiten_stats, generate_dataset)
from pdesurrogate.train import (NadamState, TrainConfig, init_params, mse_loss, nadam_step,
                                predict, relative_error, train, write_metrics)


def _dataset(count, seed, n=4, low=0.3, high=1.5):
    grid = GridSpec(1, n)
    spec = SamplingSpec(Task.ELLIPTIC, grid, low, high, count, seed)
    inputs = np.random.default_rng(seed).uniform(low, high, size=(count, n))
    targets = np.array([half_grid_harmonic_mean_1d(Field(row, grid)) for row in inputs])
    return Dataset(spec, inputs, targets)


def test_init_params_is_seeded():
    spec = build_single_conv_arch(8, 2, 16)
    first, second = init_params(spec, 5), init_params(spec, 5)
    assert_array_equal(first.values, second.values)
    assert not np.array_equal(first.values, init_params(spec, 6).values)
    conv_w, conv_b = first.layer(0)
    assert conv_w.size == 1024
    assert abs(conv_w.var() / (2.0 / 64) - 1.0) < 0.2
    assert not conv_b.any()
    assert not first.layer(3)[1].any()


def test_nadam_zero_gradient_keeps_parameters():
    config = TrainConfig()
    values = np.array([1.0, -2.0, 3.0])
    state = NadamState.zeros(3)
    for t in range(1, 20):
        nadam_step(values, np.zeros(3), state, t, config)
    assert_array_equal(values, [1.0, -2.0, 3.0])


def test_nadam_first_step():
    config = TrainConfig()
    values = np.array([0.0])
    nadam_step(values, np.array([1.0]), NadamState.zeros(1), 1, config)
    # m_hat = v_hat = 1 and the Nesterov term adds (1 - beta1) g / (1 - beta1) = g
    assert values[0] == pytest.approx(-1.9e-3 / (1.0 + 1e-8), rel=1e-12)


def test_nadam_minimizes_a_quadratic():
    config = TrainConfig(learning_rate=1e-2)
    theta = np.array([1.0])
    state = NadamState.zeros(1)
    losses = []
    for t in range(1, 1001):
        losses.append(theta[0] ** 2)
        nadam_step(theta, 2.0 * theta, state, t, config)
    assert losses[-1] < 1e-3
    assert all(b <= a for a, b in zip(losses[:30], losses[1:30]))


def test_step_numbers_start_at_one():
    with pytest.raises(ValueError):
        nadam_step(np.zeros(1), np.zeros(1), NadamState.zeros(1), 0, TrainConfig())


def test_losses():
    targets = np.array([1.0, 2.0])
    assert mse_loss(targets, targets) == 0.0
    assert mse_loss(targets + [1.0, -1.0], targets) == 1.0
    assert relative_error(targets, targets) == 0.0
    assert relative_error(1.1 * targets, targets) == pytest.approx(0.1, rel=1e-12)
    assert relative_error(np.zeros(2), targets) == 1.0
    for c in (0.5, 2.0, -1.0):
        assert relative_error(c * targets, targets) == pytest.approx(abs(c - 1.0), rel=1e-12)
    with pytest.raises(ZeroTargetNorm):
        relative_error(targets, np.zeros(2))


@pytest.mark.parametrize('kwargs', [dict(batch_size=10), dict(batch_size=500),
                                    dict(beta1=1.0), dict(learning_rate=0.0),
                                    dict(lr_drop_factor=0.0)])
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_predict_does_not_depend_on_chunking():
    spec = build_single_conv_arch(4, 1, 3)
    params = init_params(spec, 1)
    inputs = np.random.default_rng(2).standard_normal((10, 4))
    np.testing.assert_allclose(predict(spec, params, inputs, chunk=3),
                               predict(spec, params, inputs), rtol=1e-12)


def test_training_is_reproducible_and_reduces_error():
    train_set, val_set = _dataset(120, 1), _dataset(60, 2)
    spec = build_1d_three_stage_arch(4, width=8)
    config = TrainConfig(learning_rate=3e-3, batch_size=50, epochs=6, seed=9)
    params, history = train(train_set, val_set, spec, config)
    again, history_again = train(train_set, val_set, spec, config)
    assert_array_equal(params.values, again.values)
    assert history.val_relerr == history_again.val_relerr
    assert history.train_loss == history_again.train_loss
    assert len(history) == 6
    assert 1 <= history.best_epoch <= 6
    assert min(history.val_relerr) == history.val_relerr[history.best_epoch - 1]


def test_best_parameters_reproduce_logged_errors():
    train_set, val_set = _dataset(100, 3), _dataset(50, 4)
    spec = build_single_conv_arch(4, 1, 4)
    stats = compute_whiten_stats(train_set.inputs)
    params, history = train(train_set, val_set, spec, TrainConfig(epochs=4, batch_size=50), stats)
    best = history.best_epoch - 1
    train_err = relative_error(predict(spec, params, apply_whitening(train_set.inputs, stats)),
                               train_set.targets)
    val_err = relative_error(predict(spec, params, apply_whitening(val_set.inputs, stats)),
                             val_set.targets)
    assert train_err == history.train_relerr[best]
    assert val_err == history.val_relerr[best]


def test_training_rejects_mismatched_grids():
    spec = build_single_conv_arch(4, 1, 2)
    with pytest.raises(GridMismatch):
        train(_dataset(60, 1), _dataset(60, 2, n=8), spec, TrainConfig(epochs=1))


def test_metrics_file(tmp_path):
    train_set, val_set = _dataset(60, 1), _dataset(60, 2)
    _, history = train(train_set, val_set, build_single_conv_arch(4, 1, 2),
                       TrainConfig(epochs=2, batch_size=60))
    path = tmp_path / 'metrics.csv'
    write_metrics(history, str(path), comments=['config_hash abc'])
    lines = path.read_text().splitlines()
    assert lines[0] == '# config_hash abc'
    assert lines[1] == 'epoch,train_loss,train_relerr,val_relerr,lr'
    assert len(lines) == 4
    assert float(lines[2].split(',')[3]) == history.val_relerr[0]


@pytest.mark.slow
def test_overfits_ten_samples():
    train_set = _dataset(10, 5)
    spec = build_single_conv_arch(4, 1, 8)
    config = TrainConfig(learning_rate=1e-2, batch_size=50, epochs=5000, plateau_patience=200)
    params, history = train(train_set, train_set, spec, config)
    assert min(history.train_relerr) < 1e-3


@pytest.mark.slow
def test_three_stage_network_learns_the_harmonic_mean():
    grid = GridSpec(1, 8)
    train_set = generate_dataset(SamplingSpec(Task.HARMONIC, grid, 0.3, 1.5, 2560, 0))
    val_set = generate_dataset(SamplingSpec(Task.HARMONIC, grid, 0.3, 1.5, 2560, 1))
    whiten = compute_whiten_stats(train_set.inputs)
    spec = build_1d_three_stage_arch(8)
    config = TrainConfig(learning_rate=2e-3, batch_size=50, epochs=1000)
    params, history = train(train_set, val_set, spec, config, whiten)
    assert history.val_relerr[history.best_epoch - 1] <= 5e-3
    xs = np.linspace(0.3, 1.5, 200)
    fit = fit_reciprocal(xs, extract_stage1_response(spec, params, xs, whiten))
    assert fit.r2 >= 0.99
