"""
Little-endian binary codecs.

PSD1 datasets::

    magic 'PDESURD1' | version u32 | task u32 | d u32 | n u32 | count u64 | low f64 | high f64
    | seed u64 | solver tol f64 | count records of (n^d f64 inputs, 1 f64 target)
    | whitening flag u8 [| n^d f64 means | n^d f64 stds]

PDESURM1 checkpoints::

    magic 'PDESURM1' | version u32 | header length u64 | utf-8 json header
    | parameter count u64 | parameters f64
"""
import struct

import numpy as np

try:
    import ujson as json
except ImportError:
    import json

from ..errors import DatasetFormatError

DATASET_MAGIC = b'PDESURD1'
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b'PDESURM1'
CHECKPOINT_VERSION = 1

_DATASET_HEADER = struct.Struct('<8sIIIIQddQd')
_DATASET_FIELDS = ('magic', 'version', 'task', 'd', 'n', 'count', 'low', 'high', 'seed', 'tol')
_F64 = np.dtype('<f8')


def write_dataset(path, header, records, whiten=None):
    """
    Writes a PSD1 dataset file
    :param path: Path of the file to create
    :param header: dict with task, d, n, low, high, seed and tol
    :param records: Array of shape (count, n^d + 1), inputs followed by the target
    :param whiten: Optional (means, stds) pair, each of length n^d
    """
    records = np.ascontiguousarray(records, dtype=_F64)
    width = header['n'] ** header['d'] + 1
    if records.ndim != 2 or records.shape[1] != width:
        raise DatasetFormatError('records must have shape (count, %d), got %s'
                                 % (width, records.shape))
    packed = _DATASET_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, int(header['task']),
                                  int(header['d']), int(header['n']), records.shape[0],
                                  float(header['low']), float(header['high']),
                                  int(header['seed']) & 0xFFFFFFFFFFFFFFFF, float(header['tol']))
    with open(path, 'wb') as out:
        out.write(packed)
        out.write(records.tobytes())
        if whiten is None:
            out.write(struct.pack('<B', 0))
        else:
            out.write(struct.pack('<B', 1))
            for block in whiten:
                block = np.ascontiguousarray(block, dtype=_F64).ravel()
                if block.size != width - 1:
                    raise DatasetFormatError('whitening block must have %d entries' % (width - 1))
                out.write(block.tobytes())


def read_dataset(path):
    """
    Reads a PSD1 dataset file
    :param path: Path to the dataset
    :return: Tuple of header dict, records array (count, n^d + 1) and (means, stds) or None
    """
    with open(path, 'rb') as inp:
        raw = inp.read()
    if len(raw) < _DATASET_HEADER.size:
        raise DatasetFormatError('%s is too short to be a PSD1 dataset' % path)
    header = dict(zip(_DATASET_FIELDS, _DATASET_HEADER.unpack_from(raw, 0)))
    if header['magic'] != DATASET_MAGIC:
        raise DatasetFormatError('%s is not a PSD1 dataset (magic %r)' % (path, header['magic']))
    if header['version'] != DATASET_VERSION:
        raise DatasetFormatError('%s has unsupported version %d' % (path, header['version']))
    del header['magic']
    width = header['n'] ** header['d'] + 1
    offset = _DATASET_HEADER.size
    nbytes = header['count'] * width * _F64.itemsize
    if len(raw) < offset + nbytes:
        raise DatasetFormatError('%s is truncated: %d records announced' % (path, header['count']))
    records = np.frombuffer(raw, dtype=_F64, count=header['count'] * width, offset=offset)
    records = records.reshape(header['count'], width).astype(np.float64)
    offset += nbytes
    whiten = None
    if offset < len(raw) and raw[offset] == 1:
        offset += 1
        block = (width - 1) * _F64.itemsize
        if len(raw) < offset + 2 * block:
            raise DatasetFormatError('%s has a truncated whitening block' % path)
        means = np.frombuffer(raw, dtype=_F64, count=width - 1, offset=offset).astype(np.float64)
        stds = np.frombuffer(raw, dtype=_F64, count=width - 1,
                             offset=offset + block).astype(np.float64)
        whiten = (means, stds)
    return header, records, whiten


def write_checkpoint(path, header, params):
    """
    Writes a PDESURM1 checkpoint
    :param path: Path of the file to create
    :param header: json serializable dict
    :param params: Flat parameter vector
    """
    meta = json.dumps(header, sort_keys=True).encode('utf-8')
    params = np.ascontiguousarray(params, dtype=_F64).ravel()
    with open(path, 'wb') as out:
        out.write(CHECKPOINT_MAGIC)
        out.write(struct.pack('<IQ', CHECKPOINT_VERSION, len(meta)))
        out.write(meta)
        out.write(struct.pack('<Q', params.size))
        out.write(params.tobytes())


def read_checkpoint(path):
    """
    Reads a PDESURM1 checkpoint
    :param path: Path to the checkpoint
    :return: Tuple of header dict and flat parameter vector
    """
    with open(path, 'rb') as inp:
        raw = inp.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise DatasetFormatError('%s is not a PDESURM1 checkpoint' % path)
    try:
        version, length = struct.unpack_from('<IQ', raw, 8)
        if version != CHECKPOINT_VERSION:
            raise DatasetFormatError('%s has unsupported checkpoint version %d' % (path, version))
        offset = 8 + struct.calcsize('<IQ')
        header = json.loads(raw[offset:offset + length].decode('utf-8'))
        offset += length
        (count,) = struct.unpack_from('<Q', raw, offset)
        offset += 8
    except (struct.error, ValueError) as err:
        if isinstance(err, DatasetFormatError):
            raise
        raise DatasetFormatError('%s has a malformed header: %s' % (path, err))
    if not isinstance(header, dict):
        raise DatasetFormatError('%s has a malformed header' % path)
    if len(raw) < offset + count * _F64.itemsize:
        raise DatasetFormatError('%s is truncated' % path)
    params = np.frombuffer(raw, dtype=_F64, count=count, offset=offset).astype(np.float64)
    return header, params
