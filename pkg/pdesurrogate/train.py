"""
Mean-squared-error training of a network surrogate with NAdam, shuffled minibatches and a
plateau rule for the learning rate.
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from tqdm import tqdm

from .errors import ConfigError, GridMismatch, NotConverged, ShapeMismatch, ZeroTargetNorm
from .fs.savers import AutoSaveCsv
from .nn.network import NetworkSpec, Params, as_batch, backpropagate, evaluate
from .sampler import Dataset, WhitenStats, apply_whitening, compute_whiten_stats

logger = logging.getLogger(__name__)

PREDICT_CHUNK = 256
METRIC_FIELDS = ['epoch', 'train_loss', 'train_relerr', 'val_relerr', 'lr']


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimizer and schedule settings. The NAdam variant is the plain Nesterov form without the
    momentum-schedule product.
    """
    learning_rate: float = 1e-3
    batch_size: int = 100
    epochs: int = 200
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_drop_factor: float = 0.5
    plateau_patience: int = 20

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError('learning_rate must be positive, got %r' % (self.learning_rate,))
        if not 50 <= self.batch_size <= 200:
            raise ConfigError('batch_size must lie in [50, 200], got %r' % (self.batch_size,))
        if self.epochs < 1:
            raise ConfigError('epochs must be at least 1, got %r' % (self.epochs,))
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError('need 0 < beta1, beta2 < 1, got %r, %r' % (self.beta1, self.beta2))
        if not self.eps > 0:
            raise ConfigError('eps must be positive')
        if not 0 < self.lr_drop_factor <= 1:
            raise ConfigError('lr_drop_factor must lie in (0, 1], got %r' % (self.lr_drop_factor,))
        if self.plateau_patience < 1:
            raise ConfigError('plateau_patience must be at least 1')
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError('seed must be an unsigned 64-bit integer, got %r' % (self.seed,))

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    train_relerr: List[float] = field(default_factory=list)
    val_relerr: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    best_epoch: int = 0

    def __len__(self):
        return len(self.train_loss)

    def append(self, train_loss, train_relerr, val_relerr, lr):
        self.train_loss.append(train_loss)
        self.train_relerr.append(train_relerr)
        self.val_relerr.append(val_relerr)
        self.lr.append(lr)

    def rows(self):
        return [dict(epoch=i + 1, train_loss=repr(self.train_loss[i]),
                     train_relerr=repr(self.train_relerr[i]), val_relerr=repr(self.val_relerr[i]),
                     lr=repr(self.lr[i])) for i in range(len(self))]


@dataclass
class NadamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, size: int) -> 'NadamState':
        return cls(np.zeros(size), np.zeros(size))


def init_params(spec: NetworkSpec, seed: int) -> Params:
    """
    He initialization: every weight block ~ Normal(0, 2 / fan_in), biases 0.
    Blocks are drawn in layer order from one generator, so a seed fixes the whole vector.
    """
    rng = np.random.default_rng(seed)
    params = Params(spec)
    for index, layer in enumerate(spec.layers):
        blocks = params.layer(index)
        if not blocks:
            continue
        weight = blocks[0]
        fan_in = int(np.prod(weight.shape[1:]))
        weight[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=weight.shape)
    return params


def nadam_step(values: np.ndarray, grads: np.ndarray, state: NadamState, t: int,
               config: TrainConfig, lr: Optional[float] = None) -> np.ndarray:
    """
    One NAdam update, in place on values and state
    :param values: Flat parameters
    :param grads: Flat gradient
    :param state: Moment estimates, zeros before the first step
    :param t: Step number, starting at 1
    :param config: Supplies beta1, beta2 and eps
    :param lr: Learning rate, defaults to config.learning_rate
    :return: values
    """
    if t < 1:
        raise ValueError('NAdam step numbers start at 1, got %r' % (t,))
    lr = config.learning_rate if lr is None else lr
    b1, b2 = config.beta1, config.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * (grads * grads)
    bc1 = 1.0 - b1 ** t
    m_hat = state.m / bc1
    v_hat = state.v / (1.0 - b2 ** t)
    values -= lr * (b1 * m_hat + (1.0 - b1) * grads / bc1) / (np.sqrt(v_hat) + config.eps)
    return values


def mse_loss(preds, targets) -> float:
    preds, targets = np.asarray(preds, dtype=np.float64), np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ShapeMismatch('%s predictions for %s targets' % (preds.shape, targets.shape))
    return float(np.mean((preds - targets) ** 2))


def relative_error(preds, targets) -> float:
    """
    sqrt(sum (pred - target)^2 / sum target^2) over the whole split
    :raises ZeroTargetNorm: if every target is 0
    """
    preds, targets = np.asarray(preds, dtype=np.float64), np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ShapeMismatch('%s predictions for %s targets' % (preds.shape, targets.shape))
    norm = float(np.sum(targets ** 2))
    if norm == 0.0:
        raise ZeroTargetNorm('relative error is undefined for all-zero targets')
    return float(np.sqrt(np.sum((preds - targets) ** 2) / norm))


def predict(spec: NetworkSpec, params: Params, inputs: np.ndarray,
            chunk: int = PREDICT_CHUNK) -> np.ndarray:
    """
    Batched inference over (count, n^d) inputs in fixed chunks, so the same inputs always give
    bit-identical outputs whoever calls it.
    """
    batch, _ = as_batch(spec, inputs)
    out = np.empty(batch.shape[0])
    for start in range(0, batch.shape[0], chunk):
        result, _ = evaluate(spec, params, batch[start:start + chunk])
        out[start:start + chunk] = result.reshape(-1)
    return out


def _check_compatible(train_set: Dataset, val_set: Dataset, spec: NetworkSpec):
    if train_set.spec.grid != val_set.spec.grid:
        raise GridMismatch('train split on %r, validation split on %r'
                           % (train_set.spec.grid, val_set.spec.grid))
    if tuple(spec.spatial) != train_set.spec.grid.shape:
        raise ShapeMismatch('network expects fields of shape %s, data has %s'
                            % (spec.spatial, train_set.spec.grid.shape))


def train(train_set: Dataset, val_set: Dataset, spec: NetworkSpec, config: TrainConfig,
          whiten: Optional[WhitenStats] = None, progress: bool = False):
    """
    Trains spec on train_set and keeps the parameters with the lowest validation error.

    Every epoch visits the training samples in an order keyed by (seed, epoch); the learning rate
    is multiplied by lr_drop_factor whenever the training relative error has not improved for
    plateau_patience epochs.

    :param train_set: Training split
    :param val_set: Validation split on the same grid
    :param spec: Network architecture
    :param config: TrainConfig
    :param whiten: Whitening statistics, computed from the training inputs when omitted
    :param progress: Show a tqdm bar over epochs
    :return: (best Params, TrainHistory)
    :raises NotConverged: if the training loss becomes non-finite
    """
    _check_compatible(train_set, val_set, spec)
    stats = compute_whiten_stats(train_set.inputs) if whiten is None else whiten
    x_train = apply_whitening(train_set.inputs, stats)
    x_val = apply_whitening(val_set.inputs, stats)
    t_train, t_val = train_set.targets, val_set.targets
    count = t_train.shape[0]
    batch_size = min(config.batch_size, count)

    params = init_params(spec, config.seed)
    state = NadamState.zeros(len(params))
    history = TrainHistory()
    lr = config.learning_rate
    best_val, best_values = np.inf, params.values.copy()
    best_train, stale = np.inf, 0
    step = 0
    started = time.time()
    for epoch in tqdm(range(1, config.epochs + 1), disable=not progress, desc='training'):
        order = np.random.default_rng([config.seed, epoch]).permutation(count)
        for start in range(0, count, batch_size):
            idx = order[start:start + batch_size]
            batch, _ = as_batch(spec, x_train[idx])
            out, caches = evaluate(spec, params, batch)
            upstream = 2.0 * (out.reshape(-1) - t_train[idx]) / idx.size
            grads = backpropagate(spec, params, caches, upstream.reshape(out.shape))
            step += 1
            nadam_step(params.values, grads, state, step, config, lr)

        train_preds = predict(spec, params, x_train)
        train_loss = mse_loss(train_preds, t_train)
        if not np.isfinite(train_loss):
            raise NotConverged('training diverged', best=Params(spec, best_values),
                               epoch=epoch, lr=lr)
        train_rel = relative_error(train_preds, t_train)
        val_rel = relative_error(predict(spec, params, x_val), t_val)
        history.append(train_loss, train_rel, val_rel, lr)
        logger.info('epoch %d: loss %.4e train %.4e val %.4e lr %.2e',
                    epoch, train_loss, train_rel, val_rel, lr)

        if val_rel < best_val:
            best_val, best_values = val_rel, params.values.copy()
            history.best_epoch = epoch
        if train_rel < best_train:
            best_train, stale = train_rel, 0
        else:
            stale += 1
            if stale >= config.plateau_patience:
                lr *= config.lr_drop_factor
                stale = 0
                logger.info('training error plateaued, learning rate lowered to %.3e', lr)
    logger.info('trained %d epochs in %.1fs, best validation error %.4e at epoch %d',
                config.epochs, time.time() - started, best_val, history.best_epoch)
    return Params(spec, best_values), history


def write_metrics(history: TrainHistory, path, comments=None):
    """Per-epoch metrics as csv (epoch, train_loss, train_relerr, val_relerr, lr)"""
    with AutoSaveCsv(path, METRIC_FIELDS, comments=comments) as rows:
        rows.extend(history.rows())
