"""
Network graphs over the layers in layers.py: a spec, its flat parameter vector, forward and
reverse-mode evaluation and the two translation invariant architectures.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ArchitectureError, ShapeMismatch
from ..grid import Field
from .layers import Dense, PeriodicConv, ReLU, SumPool, layer_from_dict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkSpec:
    """
    Ordered layers applied to tensors of shape (batch,) + input_shape.

    :ivar input_shape: (channels, *spatial), channels is 1 for coefficient fields
    :ivar layers: Layer specs
    :ivar stages: Named half-open layer ranges (name, start, stop)
    """
    input_shape: Tuple[int, ...]
    layers: Tuple
    stages: Tuple[Tuple[str, int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'input_shape', tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, 'layers', tuple(self.layers))
        object.__setattr__(self, 'stages', tuple((str(n), int(a), int(b)) for n, a, b in self.stages))
        if not self.layers:
            raise ArchitectureError('a network needs at least one layer')
        try:
            shapes = self.shapes()
        except ShapeMismatch as err:
            raise ArchitectureError('layers do not compose: %s' % err)
        if int(np.prod(shapes[-1])) != 1:
            raise ArchitectureError('network output must be a scalar, got shape %s' % (shapes[-1],))
        for name, start, stop in self.stages:
            if not 0 <= start < stop <= len(self.layers):
                raise ArchitectureError('stage %s range [%d, %d) is invalid' % (name, start, stop))

    def shapes(self) -> List[Tuple[int, ...]]:
        """Per-sample tensor shape before the first layer and after every layer"""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    @property
    def spatial(self) -> Tuple[int, ...]:
        return self.input_shape[1:]

    def stage(self, name: str) -> Tuple[int, int]:
        for stage_name, start, stop in self.stages:
            if stage_name == name:
                return start, stop
        raise ArchitectureError('network has no stage named %r' % (name,))

    def to_dict(self):
        return {'input_shape': list(self.input_shape),
                'layers': [layer.to_dict() for layer in self.layers],
                'stages': [list(stage) for stage in self.stages]}

    @classmethod
    def from_dict(cls, data) -> 'NetworkSpec':
        try:
            return cls(tuple(data['input_shape']), tuple(layer_from_dict(l) for l in data['layers']),
                       tuple(tuple(s) for s in data.get('stages', ())))
        except (KeyError, TypeError, ShapeMismatch) as err:
            raise ArchitectureError('malformed network description: %s' % err)


def _layout(spec: NetworkSpec) -> List[List[Tuple[int, Tuple[int, ...]]]]:
    # per layer, the (offset, shape) of each weight block; W precedes b
    layout, offset = [], 0
    for layer in spec.layers:
        blocks = []
        for shape in layer.param_shapes():
            blocks.append((offset, shape))
            offset += int(np.prod(shape))
        layout.append(blocks)
    return layout


def param_count(spec: NetworkSpec) -> int:
    return sum(int(np.prod(shape)) for layer in spec.layers for shape in layer.param_shapes())


class Params(object):
    """
    Flat parameter vector of a network plus a gradient buffer of the same length.
    ``layer(i)`` hands out reshaped views, so in-place updates of ``values`` are seen by every layer.
    """

    def __init__(self, spec: NetworkSpec, values: Optional[np.ndarray] = None):
        self.spec = spec
        self.layout = _layout(spec)
        count = param_count(spec)
        if values is None:
            values = np.zeros(count)
        values = np.array(values, dtype=np.float64).ravel()
        if values.size != count:
            raise ArchitectureError('expected %d parameters, got %d' % (count, values.size))
        self.values = values
        self.grad = np.zeros(count)

    def __len__(self):
        return self.values.size

    def _views(self, buffer, index):
        return [buffer[off:off + int(np.prod(shape))].reshape(shape)
                for off, shape in self.layout[index]]

    def layer(self, index: int) -> List[np.ndarray]:
        return self._views(self.values, index)

    def layer_grad(self, index: int) -> List[np.ndarray]:
        return self._views(self.grad, index)

    def copy(self) -> 'Params':
        return Params(self.spec, self.values.copy())


def as_batch(spec: NetworkSpec, inputs) -> Tuple[np.ndarray, bool]:
    """
    Brings a Field, a single sample or a batch into (batch,) + input_shape
    :return: The batch and whether the input was a single sample
    """
    if isinstance(inputs, Field):
        inputs = inputs.values
    x = np.asarray(inputs, dtype=np.float64)
    sample_size = int(np.prod(spec.input_shape))
    if x.shape == spec.input_shape or x.shape == spec.spatial or x.shape == (sample_size,):
        return x.reshape((1,) + spec.input_shape), True
    if x.ndim >= 2 and int(np.prod(x.shape[1:])) == sample_size:
        return x.reshape((x.shape[0],) + spec.input_shape), False
    raise ShapeMismatch('input of shape %s does not fit a network on %s' % (x.shape, spec.input_shape))


def evaluate(spec: NetworkSpec, params: Params, batch: np.ndarray, start: int = 0,
             stop: Optional[int] = None):
    """
    Runs layers [start, stop) on a batch
    :return: The output tensor and the per-layer caches for backpropagate
    """
    stop = len(spec.layers) if stop is None else stop
    caches = []
    x = batch
    for index in range(start, stop):
        x, cache = spec.layers[index].forward(x, params.layer(index))
        caches.append(cache)
    return x, caches


def backpropagate(spec: NetworkSpec, params: Params, caches, upstream: np.ndarray) -> np.ndarray:
    """
    Reverse sweep over all layers given the caches of a full evaluate.
    Writes the parameter gradient into params.grad and returns it.
    """
    params.grad[:] = 0.0
    dy = upstream
    for index in reversed(range(len(spec.layers))):
        dy, grads = spec.layers[index].backward(caches[index], params.layer(index), dy)
        for buffer, grad in zip(params.layer_grad(index), grads):
            buffer[...] = grad
    return params.grad


def forward(spec: NetworkSpec, params: Params, inputs):
    """
    Network output h_theta(a)
    :param inputs: A (whitened) Field, a single sample or a batch of flattened samples
    :return: A float for a single sample, an array of shape (batch,) otherwise
    """
    batch, single = as_batch(spec, inputs)
    out, _ = evaluate(spec, params, batch)
    out = out.reshape(batch.shape[0])
    return float(out[0]) if single else out


def backward(spec: NetworkSpec, params: Params, inputs, upstream=None) -> np.ndarray:
    """
    Gradient of sum_k upstream_k h_theta(x_k) with respect to the flat parameters
    :param inputs: As for forward
    :param upstream: Per-sample output weights, ones by default
    :return: Flat gradient, also left in params.grad
    """
    batch, _ = as_batch(spec, inputs)
    out, caches = evaluate(spec, params, batch)
    weights = np.ones(batch.shape[0]) if upstream is None else np.asarray(upstream, dtype=np.float64)
    if weights.size != batch.shape[0]:
        raise ShapeMismatch('%d upstream weights for a batch of %d' % (weights.size, batch.shape[0]))
    return backpropagate(spec, params, caches, weights.reshape(out.shape))


def build_single_conv_arch(n: int, d: int, alpha: int) -> NetworkSpec:
    """
    PeriodicConv(1 -> alpha, kernel n per axis) -> ReLU -> global SumPool -> Dense(alpha -> 1).
    Has alpha n^d + 2 alpha + 1 parameters.
    """
    if n < 2 or d < 1 or alpha < 1:
        raise ArchitectureError('need n >= 2, d >= 1 and alpha >= 1, got n=%r d=%r alpha=%r'
                                % (n, d, alpha))
    kernel = (n,) * d
    layers = (PeriodicConv(1, alpha, kernel), ReLU(), SumPool(kernel), Dense(alpha, 1))
    return NetworkSpec((1,) + kernel, layers, (('features', 0, 2), ('pool', 2, 3), ('output', 3, 4)))


def _pointwise_stage(width: int, depth: int) -> List:
    channels = [1] + [width] * (depth - 1) + [1]
    layers = []
    for j in range(depth):
        layers.append(PeriodicConv(channels[j], channels[j + 1], (1,)))
        if j < depth - 1:
            layers.append(ReLU())
    return layers


def build_1d_three_stage_arch(n: int, width: int = 16, stage_depth: int = 3) -> NetworkSpec:
    """
    Three stages for 1D fields: kernel-1 convolutions acting pointwise (1 -> width -> ... -> 1),
    a sum pool over all n points, and a mirror of the first stage acting on that sum.
    Stage 1 can learn x -> 1/x and stage 3 the outer reciprocal of a harmonic mean.
    """
    if n < 2 or width < 1 or stage_depth < 1:
        raise ArchitectureError('need n >= 2, width >= 1 and stage_depth >= 1')
    first = _pointwise_stage(width, stage_depth)
    third = _pointwise_stage(width, stage_depth)
    layers = tuple(first + [SumPool((n,))] + third)
    k = len(first)
    return NetworkSpec((1, n), layers,
                       (('stage1', 0, k), ('stage2', k, k + 1), ('stage3', k + 1, len(layers))))


def extract_stage1_response(spec: NetworkSpec, params: Params, x_values: Sequence[float],
                            whiten=None) -> np.ndarray:
    """
    The learned pointwise map of stage 1, each x fed as a single-entry input.
    :param spec: A three-stage network
    :param params: Its parameters
    :param x_values: Raw coefficient values
    :param whiten: Optional WhitenStats the network was trained with; the per-position statistics
        are averaged since stage 1 acts identically on every position
    :return: Array with one stage-1 output per x
    :raises ArchitectureError: if the network has no pointwise stage 1
    """
    start, stop = spec.stage('stage1')
    for layer in spec.layers[start:stop]:
        if isinstance(layer, PeriodicConv) and any(k != 1 for k in layer.kernel):
            raise ArchitectureError('stage 1 is not pointwise')
        if not isinstance(layer, (PeriodicConv, ReLU)):
            raise ArchitectureError('stage 1 may only hold kernel-1 convolutions and ReLUs')
    x = np.asarray(x_values, dtype=np.float64).ravel()
    if whiten is not None:
        x = (x - float(np.mean(whiten.mean))) / float(np.mean(whiten.std))
    out, _ = evaluate(spec, params, x.reshape(-1, 1, 1), start, stop)
    return out.reshape(-1)


@dataclass(frozen=True)
class ReciprocalFit:
    beta1: float
    beta2: float
    r2: float


def fit_reciprocal(x, y) -> ReciprocalFit:
    """
    Least squares fit y ~ beta1 / x + beta2
    :return: ReciprocalFit with the coefficient of determination
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise ShapeMismatch('need matching x and y with at least 2 points')
    if np.any(x == 0):
        raise ValueError('x must be nonzero for a reciprocal fit')
    design = np.stack([1.0 / x, np.ones_like(x)], axis=1)
    (beta1, beta2), _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    ss_res = float(np.sum((y - design @ np.array([beta1, beta2])) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return ReciprocalFit(float(beta1), float(beta2), r2)
