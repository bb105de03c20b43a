import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from pdesurrogate.errors import ArchitectureError, ShapeMismatch
from pdesurrogate.grid import Field, GridSpec
from pdesurrogate.nn.checkpoint import load_checkpoint, save_checkpoint
from pdesurrogate.nn.layers import (Dense, PeriodicConv, ReLU, SumPool, conv_backward,
                                    conv_forward, dense_backward, dense_forward, periodic_fold,
                                    periodic_pad, relu_forward, sum_pool_backward,
                                    sum_pool_forward)
from pdesurrogate.nn.network import (NetworkSpec, Params, backward, build_1d_three_stage_arch,
                                     build_single_conv_arch, evaluate, extract_stage1_response,
                                     fit_reciprocal, forward, param_count)
from pdesurrogate.sampler import WhitenStats


def _random_params(spec, rng, scale=0.5):
    return Params(spec, scale * rng.standard_normal(param_count(spec)))


def _relative(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_periodic_pad_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 4)
    assert_array_equal(periodic_pad(x, (1,)), x)
    assert_array_equal(periodic_pad(x, (3,)).ravel(), [4, 1, 2, 3, 4, 1])
    assert_array_equal(periodic_pad(x, (4,)).ravel(), [4, 1, 2, 3, 4, 1, 2])
    with pytest.raises(ShapeMismatch):
        periodic_pad(x, (5,))


def test_periodic_fold_is_adjoint_of_pad(rng):
    x = rng.standard_normal((2, 3, 5, 4))
    y = rng.standard_normal((2, 3, 5 + 2, 4 + 3))
    kernel = (3, 4)
    lhs = np.vdot(periodic_pad(x, kernel), y)
    rhs = np.vdot(x, periodic_fold(y, kernel, (5, 4)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_conv_examples():
    x = np.array([1.0, 2.0, 3.0]).reshape(1, 1, 3)
    identity = conv_forward(x, np.ones((1, 1, 1)), np.zeros(1))
    assert_array_equal(identity, x)
    cyclic = conv_forward(periodic_pad(x, (3,)), np.ones((1, 1, 3)), np.zeros(1))
    assert_array_equal(cyclic.ravel(), [6.0, 6.0, 6.0])
    with pytest.raises(ShapeMismatch):
        conv_forward(x, np.ones((1, 2, 1)), np.zeros(1))


def test_conv_is_shift_equivariant(rng):
    layer = PeriodicConv(2, 3, (3, 2))
    weights = [rng.standard_normal(s) for s in layer.param_shapes()]
    x = rng.standard_normal((1, 2, 5, 4))
    out, _ = layer.forward(x, weights)
    shift = (2, 3)
    shifted, _ = layer.forward(np.roll(x, shift, axis=(2, 3)), weights)
    assert_allclose(shifted, np.roll(out, shift, axis=(2, 3)), rtol=1e-12, atol=1e-12)


def _check_layer_gradients(layer, x, rng, step=1e-5):
    weights = [rng.standard_normal(s) for s in layer.param_shapes()]
    out, cache = layer.forward(x, weights)
    upstream = rng.standard_normal(out.shape)
    dx, grads = layer.backward(cache, weights, upstream)

    def objective():
        return np.vdot(layer.forward(x, weights)[0], upstream)

    for target, grad in [(x, dx)] + list(zip(weights, grads)):
        fd = np.empty_like(target)
        for idx in np.ndindex(*target.shape):
            saved = target[idx]
            target[idx] = saved + step
            plus = objective()
            target[idx] = saved - step
            minus = objective()
            target[idx] = saved
            fd[idx] = (plus - minus) / (2 * step)
        assert _relative(grad, fd) < 1e-6


def test_conv_gradients(rng):
    _check_layer_gradients(PeriodicConv(2, 3, (3, 2)), rng.standard_normal((2, 2, 4, 3)), rng)
    _check_layer_gradients(PeriodicConv(1, 2, (4,)), rng.standard_normal((3, 1, 4)), rng)


def test_dense_gradients(rng):
    _check_layer_gradients(Dense(6, 2), rng.standard_normal((3, 2, 3)), rng)
    x = rng.standard_normal((4, 5))
    w, b = rng.standard_normal((3, 5)), rng.standard_normal(3)
    dx, dw, db = dense_backward(x, w, np.ones((4, 3)))
    assert_allclose(db, 4.0)
    assert dx.shape == x.shape and dw.shape == w.shape
    assert_allclose(dense_forward(x, w, b), x @ w.T + b)


def test_relu_and_pool():
    x = np.array([-2.0, 0.0, 3.0]).reshape(1, 1, 3)
    assert_array_equal(relu_forward(x).ravel(), [0.0, 0.0, 3.0])
    assert_array_equal(ReLU().backward(x, None, np.ones_like(x))[0].ravel(), [0.0, 0.0, 1.0])
    features = np.arange(2 * 3 * 4 * 4, dtype=float).reshape(2, 3, 4, 4)
    pooled = sum_pool_forward(features, (4, 4))
    assert_allclose(pooled[..., 0, 0], features.sum(axis=(2, 3)))
    halves = sum_pool_forward(features, (2, 4))
    assert halves.shape == (2, 3, 2, 1)
    assert_array_equal(sum_pool_backward(np.ones((2, 3, 2, 1)), (2, 4)), np.ones_like(features))
    with pytest.raises(ShapeMismatch):
        sum_pool_forward(features, (3, 4))
    _check_layer_gradients(SumPool((2, 2)), np.random.default_rng(1).standard_normal((2, 1, 4, 4)),
                           np.random.default_rng(2))


@pytest.mark.parametrize('n, alpha, expected', [(8, 16, 1057), (16, 16, 4129), (8, 5, 331),
                                                (16, 5, 1291)])
def test_single_conv_parameter_counts(n, alpha, expected):
    assert param_count(build_single_conv_arch(n, 2, alpha)) == expected


def test_three_stage_parameter_counts():
    spec = build_1d_three_stage_arch(8)
    assert param_count(spec) == 2 * 321
    start, stop = spec.stage('stage1')
    assert sum(int(np.prod(s)) for layer in spec.layers[start:stop] for s in layer.param_shapes()) == 321
    assert param_count(build_1d_three_stage_arch(8, stage_depth=4)) == 2 * 593
    assert not isinstance(spec.layers[stop - 1], ReLU)


def test_zero_parameters_give_zero_output(rng):
    spec = build_single_conv_arch(4, 2, 3)
    x = Field(rng.standard_normal((4, 4)), GridSpec(2, 4))
    assert forward(spec, Params(spec), x) == 0.0
    params = Params(spec)
    params.values[-1] = 0.75
    assert forward(spec, params, x) == 0.75


def test_forward_accepts_batches(rng):
    spec = build_single_conv_arch(4, 2, 3)
    params = _random_params(spec, rng)
    batch = rng.standard_normal((5, 16))
    outputs = forward(spec, params, batch)
    assert outputs.shape == (5,)
    assert outputs[2] == pytest.approx(forward(spec, params, batch[2].reshape(4, 4)), rel=1e-12)
    with pytest.raises(ShapeMismatch):
        forward(spec, params, np.ones(15))


@pytest.mark.parametrize('build', [lambda: build_single_conv_arch(4, 2, 3),
                                   lambda: build_single_conv_arch(4, 1, 4),
                                   lambda: build_1d_three_stage_arch(4, width=4)])
def test_network_gradient_matches_finite_differences(rng, build):
    spec = build()
    params = _random_params(spec, rng)
    x = rng.standard_normal((3,) + spec.spatial)
    upstream = rng.standard_normal(3)
    grad = backward(spec, params, x.reshape(3, -1), upstream).copy()
    step = 1e-5
    fd = np.empty_like(grad)
    for i in range(len(params)):
        saved = params.values[i]
        params.values[i] = saved + step
        plus = np.vdot(forward(spec, params, x.reshape(3, -1)), upstream)
        params.values[i] = saved - step
        minus = np.vdot(forward(spec, params, x.reshape(3, -1)), upstream)
        params.values[i] = saved
        fd[i] = (plus - minus) / (2 * step)
    assert _relative(grad, fd) < 1e-5
    assert_array_equal(params.grad, grad)


def test_single_conv_network_is_shift_invariant(rng):
    spec = build_single_conv_arch(8, 2, 6)
    params = _random_params(spec, rng)
    a = Field(rng.uniform(0.3, 3.0, (8, 8)), GridSpec(2, 8))
    base = forward(spec, params, a)
    for shift in np.ndindex(8, 8):
        assert abs(forward(spec, params, a.shifted(shift)) - base) < 1e-9 * abs(base)


def test_three_stage_network_is_shift_invariant(rng):
    spec = build_1d_three_stage_arch(8)
    params = _random_params(spec, rng)
    a = Field(rng.uniform(0.3, 1.5, 8), GridSpec(1, 8))
    base = forward(spec, params, a)
    for shift in range(8):
        assert abs(forward(spec, params, a.shifted((shift,))) - base) < 1e-9 * abs(base)


def test_spec_validation_and_serialization():
    spec = build_1d_three_stage_arch(8, width=4)
    assert NetworkSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ArchitectureError):
        NetworkSpec((1, 4), (PeriodicConv(2, 1, (1,)),))
    with pytest.raises(ArchitectureError):
        NetworkSpec((1, 4), (PeriodicConv(1, 3, (1,)),))
    with pytest.raises(ArchitectureError):
        build_single_conv_arch(1, 2, 4)


def test_stage1_response(rng):
    spec = build_1d_three_stage_arch(8, width=4)
    xs = np.linspace(0.3, 1.5, 100)
    assert_array_equal(extract_stage1_response(spec, Params(spec), xs), 0.0)

    params = _random_params(spec, rng)
    response = extract_stage1_response(spec, params, xs)
    start, stop = spec.stage('stage1')
    for x, value in zip(xs[::10], response[::10]):
        out, _ = evaluate(spec, params, np.full((1, 1, 1), x), start, stop)
        assert out.item() == pytest.approx(value, rel=1e-12, abs=1e-14)

    stats = WhitenStats(np.full(8, 0.9), np.full(8, 0.3))
    whitened = extract_stage1_response(spec, params, xs, stats)
    assert_allclose(whitened, extract_stage1_response(spec, params, (xs - 0.9) / 0.3))

    with pytest.raises(ArchitectureError):
        extract_stage1_response(build_single_conv_arch(4, 1, 2), Params(build_single_conv_arch(4, 1, 2)), xs)


def test_reciprocal_fit():
    xs = np.linspace(0.3, 1.5, 200)
    fit = fit_reciprocal(xs, 2.0 / xs + 1.0)
    assert fit.beta1 == pytest.approx(2.0, abs=1e-8)
    assert fit.beta2 == pytest.approx(1.0, abs=1e-8)
    assert fit.r2 == pytest.approx(1.0, abs=1e-8)
    flat = fit_reciprocal(xs, np.full_like(xs, 3.0))
    assert abs(flat.beta1) < 1e-8
    with pytest.raises(ValueError):
        fit_reciprocal([0.0, 1.0], [1.0, 2.0])


def test_checkpoint_round_trip(tmp_path, rng):
    spec = build_single_conv_arch(4, 2, 3)
    params = _random_params(spec, rng)
    stats = WhitenStats(rng.uniform(size=16), rng.uniform(0.5, 1.0, size=16))
    path = str(tmp_path / 'model.pdesurm1')
    save_checkpoint(path, spec, params, stats, {'config_hash': 'abc'})
    loaded = load_checkpoint(path)
    assert loaded.spec == spec
    assert_array_equal(loaded.params.values, params.values)
    assert_array_equal(loaded.whiten.mean, stats.mean)
    assert_array_equal(loaded.whiten.std, stats.std)
    assert loaded.metadata == {'config_hash': 'abc'}
