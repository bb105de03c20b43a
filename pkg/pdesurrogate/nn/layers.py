"""
Layer kernels on batched tensors of shape (batch, channels, *spatial), float64 throughout.

Every layer spec exposes ``param_shapes``, ``output_shape``, ``forward`` (returning the output and
a cache) and ``backward`` (returning the input gradient and the parameter gradients).
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch

Shape = Tuple[int, ...]


def _split_pad(k: int) -> Tuple[int, int]:
    left = (k - 1) // 2
    return left, k - 1 - left


def periodic_pad(x: np.ndarray, kernel: Sequence[int]) -> np.ndarray:
    """
    Extends every spatial axis cyclically by k - 1 entries (floor on the left, ceil on the right),
    so a valid correlation with the kernel keeps the spatial size.
    :param x: Tensor (batch, channels, *spatial)
    :param kernel: Kernel size per spatial axis
    """
    if len(kernel) != x.ndim - 2:
        raise ShapeMismatch('kernel %s does not match %d spatial axes' % (tuple(kernel), x.ndim - 2))
    for k, size in zip(kernel, x.shape[2:]):
        if not 1 <= k <= size:
            raise ShapeMismatch('kernel size %d outside [1, %d]' % (k, size))
    pads = [(0, 0), (0, 0)] + [_split_pad(k) for k in kernel]
    return np.pad(x, pads, mode='wrap')


def periodic_fold(dx_pad: np.ndarray, kernel: Sequence[int], spatial: Sequence[int]) -> np.ndarray:
    """Adjoint of periodic_pad: adds the gradient of every padded copy back onto its source entry"""
    out = dx_pad
    for axis, (k, size) in enumerate(zip(kernel, spatial), 2):
        if k == 1:
            continue
        idx = (np.arange(out.shape[axis]) - _split_pad(k)[0]) % size
        shape = list(out.shape)
        shape[axis] = size
        folded = np.zeros(shape)
        np.add.at(folded, (slice(None),) * axis + (idx,), out)
        out = folded
    return out


def conv_forward(x_pad: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    Valid cross-correlation of a padded input.
    :param x_pad: (batch, in_ch, *padded)
    :param weight: (out_ch, in_ch, *kernel)
    :param bias: (out_ch,)
    :return: (batch, out_ch, *out)
    """
    d = x_pad.ndim - 2
    if weight.ndim != d + 2 or weight.shape[1] != x_pad.shape[1]:
        raise ShapeMismatch('weight %s does not fit input %s' % (weight.shape, x_pad.shape))
    kernel = weight.shape[2:]
    windows = sliding_window_view(x_pad, kernel, axis=tuple(range(2, 2 + d)))
    out = np.tensordot(windows, weight, axes=([1] + list(range(2 + d, 2 + 2 * d)),
                                              [1] + list(range(2, 2 + d))))
    out = np.moveaxis(out, -1, 1)
    return out + bias.reshape((1, -1) + (1,) * d)


def conv_backward(x_pad: np.ndarray, weight: np.ndarray,
                  upstream: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Reverse mode of conv_forward.
    :return: (d x_pad, d weight, d bias)
    """
    d = x_pad.ndim - 2
    kernel = weight.shape[2:]
    spatial_axes = list(range(2, 2 + d))
    windows = sliding_window_view(x_pad, kernel, axis=tuple(spatial_axes))
    dweight = np.tensordot(upstream, windows, axes=([0] + spatial_axes, [0] + spatial_axes))
    dbias = upstream.sum(axis=tuple([0] + spatial_axes))
    out_shape = upstream.shape[2:]
    dx_pad = np.zeros_like(x_pad)
    for offset in np.ndindex(*kernel):
        tap = weight[(slice(None), slice(None)) + offset]
        contrib = np.moveaxis(np.tensordot(upstream, tap, axes=([1], [0])), -1, 1)
        window = tuple(slice(o, o + size) for o, size in zip(offset, out_shape))
        dx_pad[(slice(None), slice(None)) + window] += contrib
    return dx_pad, dweight, dbias


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # subgradient 0 at 0
    return upstream * (x > 0.0)


def sum_pool_forward(x: np.ndarray, window: Sequence[int]) -> np.ndarray:
    """Non-overlapping window sums; a window equal to the spatial extent is a global sum"""
    spatial = x.shape[2:]
    if len(window) != len(spatial) or any(s % w for s, w in zip(spatial, window)):
        raise ShapeMismatch('pool window %s does not tile %s' % (tuple(window), spatial))
    shape = list(x.shape[:2])
    for s, w in zip(spatial, window):
        shape += [s // w, w]
    return x.reshape(shape).sum(axis=tuple(3 + 2 * i for i in range(len(window))))


def sum_pool_backward(upstream: np.ndarray, window: Sequence[int]) -> np.ndarray:
    dx = upstream
    for axis, w in enumerate(window, 2):
        dx = np.repeat(dx, w, axis=axis)
    return dx


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    :param x: (batch, ...) flattened to (batch, in)
    :param weight: (out, in)
    :param bias: (out,)
    :return: (batch, out)
    """
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != weight.shape[1]:
        raise ShapeMismatch('dense layer expects %d inputs, got %d' % (weight.shape[1], flat.shape[1]))
    return flat @ weight.T + bias


def dense_backward(x: np.ndarray, weight: np.ndarray,
                   upstream: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    flat = x.reshape(x.shape[0], -1)
    dx = (upstream @ weight).reshape(x.shape)
    return dx, upstream.T @ flat, upstream.sum(axis=0)


@dataclass(frozen=True)
class PeriodicConv:
    in_ch: int
    out_ch: int
    kernel: Tuple[int, ...]
    bias: bool = True
    kind = 'conv'

    def param_shapes(self) -> List[Shape]:
        shapes = [(self.out_ch, self.in_ch) + tuple(self.kernel)]
        if self.bias:
            shapes.append((self.out_ch,))
        return shapes

    def output_shape(self, shape: Shape) -> Shape:
        if shape[0] != self.in_ch or len(shape) - 1 != len(self.kernel):
            raise ShapeMismatch('conv %d->%d with kernel %s cannot take %s'
                                % (self.in_ch, self.out_ch, self.kernel, shape))
        if any(not 1 <= k <= s for k, s in zip(self.kernel, shape[1:])):
            raise ShapeMismatch('kernel %s larger than spatial extent %s' % (self.kernel, shape[1:]))
        return (self.out_ch,) + tuple(shape[1:])

    def forward(self, x, weights):
        x_pad = periodic_pad(x, self.kernel)
        bias = weights[1] if self.bias else np.zeros(self.out_ch)
        return conv_forward(x_pad, weights[0], bias), (x_pad, x.shape[2:])

    def backward(self, cache, weights, upstream):
        x_pad, spatial = cache
        dx_pad, dweight, dbias = conv_backward(x_pad, weights[0], upstream)
        grads = [dweight, dbias] if self.bias else [dweight]
        return periodic_fold(dx_pad, self.kernel, spatial), grads

    def to_dict(self):
        return dict(kind=self.kind, in_ch=self.in_ch, out_ch=self.out_ch,
                    kernel=list(self.kernel), bias=self.bias)


@dataclass(frozen=True)
class ReLU:
    kind = 'relu'

    def param_shapes(self) -> List[Shape]:
        return []

    def output_shape(self, shape: Shape) -> Shape:
        return shape

    def forward(self, x, weights):
        return relu_forward(x), x

    def backward(self, cache, weights, upstream):
        return relu_backward(cache, upstream), []

    def to_dict(self):
        return dict(kind=self.kind)


@dataclass(frozen=True)
class SumPool:
    window: Tuple[int, ...]
    kind = 'sumpool'

    def param_shapes(self) -> List[Shape]:
        return []

    def output_shape(self, shape: Shape) -> Shape:
        spatial = shape[1:]
        if len(spatial) != len(self.window) or any(s % w for s, w in zip(spatial, self.window)):
            raise ShapeMismatch('pool window %s does not tile %s' % (self.window, spatial))
        return (shape[0],) + tuple(s // w for s, w in zip(spatial, self.window))

    def forward(self, x, weights):
        return sum_pool_forward(x, self.window), None

    def backward(self, cache, weights, upstream):
        return sum_pool_backward(upstream, self.window), []

    def to_dict(self):
        return dict(kind=self.kind, window=list(self.window))


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    bias: bool = True
    kind = 'dense'

    def param_shapes(self) -> List[Shape]:
        shapes = [(self.out_features, self.in_features)]
        if self.bias:
            shapes.append((self.out_features,))
        return shapes

    def output_shape(self, shape: Shape) -> Shape:
        if int(np.prod(shape)) != self.in_features:
            raise ShapeMismatch('dense layer expects %d inputs, got shape %s'
                                % (self.in_features, shape))
        return (self.out_features,)

    def forward(self, x, weights):
        bias = weights[1] if self.bias else np.zeros(self.out_features)
        return dense_forward(x, weights[0], bias), x

    def backward(self, cache, weights, upstream):
        dx, dweight, dbias = dense_backward(cache, weights[0], upstream)
        return dx, ([dweight, dbias] if self.bias else [dweight])

    def to_dict(self):
        return dict(kind=self.kind, in_features=self.in_features,
                    out_features=self.out_features, bias=self.bias)


def layer_from_dict(data):
    kind = data.get('kind')
    if kind == PeriodicConv.kind:
        return PeriodicConv(int(data['in_ch']), int(data['out_ch']),
                            tuple(int(k) for k in data['kernel']), bool(data.get('bias', True)))
    if kind == ReLU.kind:
        return ReLU()
    if kind == SumPool.kind:
        return SumPool(tuple(int(w) for w in data['window']))
    if kind == Dense.kind:
        return Dense(int(data['in_features']), int(data['out_features']),
                     bool(data.get('bias', True)))
    raise ShapeMismatch('unknown layer kind %r' % (kind,))
