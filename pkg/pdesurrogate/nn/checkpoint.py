"""
PDESURM1 model checkpoints: architecture, whitening statistics and training metadata in a json
header, parameters as a raw f64 block.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..errors import DatasetFormatError
from ..fs.binary import read_checkpoint, write_checkpoint
from .network import NetworkSpec, Params, param_count

logger = logging.getLogger(__name__)


def _encode(values) -> list:
    # float.hex round-trips exactly whatever the json backend does with doubles
    return [float(v).hex() for v in np.asarray(values, dtype=np.float64).ravel()]


def _decode(values) -> np.ndarray:
    return np.array([float.fromhex(v) for v in values], dtype=np.float64)


@dataclass(eq=False)
class Checkpoint:
    spec: NetworkSpec
    params: Params
    whiten: Optional[object] = None
    metadata: Dict = field(default_factory=dict)


def save_checkpoint(path, spec: NetworkSpec, params: Params, whiten=None, metadata=None):
    """
    :param path: File to create
    :param spec: Network architecture
    :param params: Trained parameters
    :param whiten: Optional WhitenStats of the training inputs
    :param metadata: json serializable extras, i.e. config hash and train config
    """
    header = {'architecture': spec.to_dict(), 'param_count': param_count(spec),
              'whiten': None if whiten is None else {'mean': _encode(whiten.mean),
                                                     'std': _encode(whiten.std)},
              'metadata': dict(metadata or {})}
    write_checkpoint(path, header, params.values)
    logger.info('wrote checkpoint with %d parameters to %s', len(params), path)


def load_checkpoint(path) -> Checkpoint:
    from ..sampler import WhitenStats

    header, values = read_checkpoint(path)
    try:
        spec = NetworkSpec.from_dict(header['architecture'])
    except (KeyError, TypeError, ValueError) as err:
        raise DatasetFormatError('%s has no valid architecture in its header: %r' % (path, err))
    if values.size != param_count(spec):
        raise DatasetFormatError('%s holds %d parameters, its architecture needs %d'
                                 % (path, values.size, param_count(spec)))
    whiten = header.get('whiten')
    if whiten is not None:
        whiten = WhitenStats(_decode(whiten['mean']), _decode(whiten['std']))
    return Checkpoint(spec, Params(spec, values), whiten, header.get('metadata', {}))
