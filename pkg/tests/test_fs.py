import struct

import numpy as np
import pytest

from pdesurrogate.errors import DatasetFormatError
from pdesurrogate.fs.binary import read_checkpoint, write_checkpoint
from pdesurrogate.fs.formatters import (float_formatter, format_output, mean_std_formatter,
                                        sci_formatter)
from pdesurrogate.fs.readers import CSVFile, read_csv_matrix, read_json
from pdesurrogate.fs.savers import AutoSaveCsv, AutoSaveJson, AutoSLatexTable


def test_csv_reader_skips_comments_and_blank_lines(tmp_path):
    path = tmp_path / 'field.csv'
    path.write_text('# coefficient\n1.0, 2.0\n\n3.5,4\n')
    with CSVFile(str(path)) as rows:
        assert list(rows) == [[1.0, 2.0], [3.5, 4.0]]
    assert read_csv_matrix(str(path)).shape == (2, 2)


def test_csv_matrix_must_be_rectangular(tmp_path):
    path = tmp_path / 'ragged.csv'
    path.write_text('1,2\n3\n')
    with pytest.raises(ValueError):
        read_csv_matrix(str(path))


def test_csv_saver_writes_comments_then_rows(tmp_path):
    path = str(tmp_path / 'out.csv')
    with AutoSaveCsv(path, ['epoch', 'loss'], comments=['config_hash xyz']) as rows:
        rows.append(dict(epoch=1, loss=0.5))
    with open(path) as inp:
        assert inp.read().splitlines() == ['# config_hash xyz', 'epoch,loss', '1,0.5']


def test_savers_skip_writing_when_the_block_fails(tmp_path):
    path = tmp_path / 'never.csv'
    with pytest.raises(RuntimeError):
        with AutoSaveCsv(str(path), ['a']) as rows:
            rows.append(dict(a=1))
            raise RuntimeError('boom')
    assert not path.exists()


def test_json_and_latex_savers(tmp_path):
    json_path = str(tmp_path / 'meta.json')
    with AutoSaveJson(json_path) as meta:
        meta.update(n=8, task='elliptic')
    assert read_json(json_path) == {'n': 8, 'task': 'elliptic'}
    table_path = tmp_path / 'table.tex'
    with AutoSLatexTable(str(table_path), ['n', 'error']) as rows:
        rows.append([8, '3.0e-03'])
    assert '\\begin{tabular}' in table_path.read_text()


def test_formatters():
    assert float(float_formatter(0.1 + 0.2)) == 0.1 + 0.2
    assert mean_std_formatter(1.86, 0.10, digits=3) == '1.86 ± 0.1'
    assert sci_formatter(0.003) == '3.0e-03'
    assert format_output(1.5, lambda v: '%g' % v) == '1.5\n'


def test_checkpoint_codec(tmp_path):
    path = str(tmp_path / 'model.bin')
    params = np.linspace(-1, 1, 7)
    write_checkpoint(path, {'kind': 'test'}, params)
    header, loaded = read_checkpoint(path)
    assert header == {'kind': 'test'}
    np.testing.assert_array_equal(loaded, params)
    with open(path, 'rb') as inp:
        raw = inp.read()
    truncated = tmp_path / 'short.bin'
    truncated.write_bytes(raw[:-8])
    with pytest.raises(DatasetFormatError):
        read_checkpoint(str(truncated))
    bogus = tmp_path / 'bogus.bin'
    bogus.write_bytes(b'PDESURD1' + raw[8:])
    with pytest.raises(DatasetFormatError):
        read_checkpoint(str(bogus))
    for cut in (10, 20, 30):
        short = tmp_path / ('cut%d.bin' % cut)
        short.write_bytes(raw[:cut])
        with pytest.raises(DatasetFormatError):
            read_checkpoint(str(short))
    listed = tmp_path / 'listed.bin'
    body = b'[1, 2]'
    listed.write_bytes(raw[:8] + struct.pack('<IQ', 1, len(body)) + body + struct.pack('<Q', 0))
    with pytest.raises(DatasetFormatError):
        read_checkpoint(str(listed))


def test_csv_reader_strips_both_sides(tmp_path):
    path = tmp_path / 'indented.csv'
    path.write_text('   # indented comment\n  \t\n  1.0,2.0  \n\t3.0,4.0\n')
    assert read_csv_matrix(str(path)).tolist() == [[1.0, 2.0], [3.0, 4.0]]
