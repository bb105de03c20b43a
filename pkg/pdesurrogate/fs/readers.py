import csv
import os

import numpy as np

try:
    import ujson as json
except ImportError:
    import json


class CSVFile(object):
    """
    Utility class for reading numeric csv files, one list of floats per row.
    Blank lines and lines starting with # are skipped.

    Example:
        with CSVFile('field.csv') as rows:
            for row in rows:
                print(row)
    """

    def __init__(self, csv_path, delimiter=','):
        """
        :param csv_path: Path to csv file to be read
        :param delimiter: Optional column delimiter. Defaults to ','
        """
        self.csv_path = os.path.expanduser(csv_path)
        self.csvin = open(self.csv_path, 'r')
        self.delimiter = delimiter

    def _rows(self):
        lines = (line.strip() for line in self.csvin)
        lines = (line for line in lines if line and not line.startswith('#'))
        for lineno, row in enumerate(csv.reader(lines, delimiter=self.delimiter), 1):
            try:
                yield [float(cell) for cell in row if cell.strip()]
            except ValueError as err:
                raise ValueError('%s: row %d is not numeric: %s' % (self.csv_path, lineno, err))

    def __enter__(self):
        """
        :return: Generator yielding each row as a list of floats
        """
        return self._rows()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.csvin.close()


def read_csv_matrix(csv_path, delimiter=','):
    """
    Read a rectangular numeric csv file
    :param csv_path: Path to csv file to be read
    :param delimiter: Optional column delimiter. Defaults to ','
    :return: 2D numpy array of float64, one row per csv row
    """
    with CSVFile(csv_path, delimiter=delimiter) as rows:
        data = list(rows)
    if not data:
        raise ValueError('%s contains no numeric rows' % csv_path)
    widths = {len(row) for row in data}
    if len(widths) != 1:
        raise ValueError('%s is not rectangular, row widths %s' % (csv_path, sorted(widths)))
    return np.asarray(data, dtype=np.float64)


class JsonFile(object):
    """
    Utility class for reading json files.

    Example:
       with JsonFile('run.json') as jsonfile:
           print(jsonfile)
    """

    def __init__(self, jsonfp):
        """
        :param jsonfp: Path to json file
        """
        self.jsonin = open(os.path.expanduser(jsonfp), 'r')

    def __enter__(self):
        """
        :return: The contents of the json file
        """
        return json.load(self.jsonin)

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.jsonin.close()


def read_json(jsonfp):
    """
    Returns the contents of a json file
    :param str jsonfp: Path to json file
    """
    with JsonFile(jsonfp) as jsondata:
        return jsondata
