# -*- coding: utf-8 -*-
import csv

try:
    import ujson as json
except ImportError:
    import json

from tabulate import tabulate


def get_accumulator(accu):
    """
    Initializes the accumulator.
    If it is callable, type reference, calls the constructor.
    Otherwise returns the accumulator.
    :param accu: The data accumulator
    :return: The initialized accumulator
    """
    if callable(accu):
        return accu()
    return accu


class AutoSaveCsv(object):
    """
    Utility context class for csv.DictWriter.
    Rows appended to the accumulator are written when the block exits without an exception.

    Example:
        with AutoSaveCsv('metrics.csv', ['epoch', 'loss']) as rows:
            rows.append(dict(epoch=1, loss=0.5))
    """

    def __init__(self, file, fieldnames, comments=None):
        """
        :param file: Path to csv file to be created
        :param fieldnames: List of column names
        :param comments: Optional lines written first, each prefixed with '# '
        """
        if file is None:
            raise ValueError('The file argument was not supplied')
        self.accu = list()
        self.file = file
        self.fieldnames = fieldnames
        self.comments = list(comments or [])

    def __enter__(self):
        """
        :return: accumulator to put data in
        :rtype: list
        """
        return self.accu

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            return
        with open(self.file, 'w', newline='') as out:
            for comment in self.comments:
                out.write('# %s\n' % comment)
            writer = csv.DictWriter(out, fieldnames=self.fieldnames)
            writer.writeheader()
            writer.writerows(self.accu)


class AutoSaveJson(object):
    """
    Utility context class for saving data as json.
    """

    def __init__(self, file, accu=dict):
        """
        :param file: Path to json file to be created
        :param accu: Data accumulator. Defaults to dict
        """
        if file is None:
            raise ValueError('The file argument was not supplied')
        self.accu = get_accumulator(accu)
        self.file = file

    def __enter__(self):
        """
        :return: accumulator to put data in
        """
        return self.accu

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            return
        with open(self.file, 'w') as out:
            out.write(json.dumps(self.accu, indent=2, sort_keys=True))
            out.write('\n')


class AutoSLatexTable(object):
    """
    Utility context class for tabulate.tabulate.
    """

    def __init__(self, file, headers, accu=list, tablefmt='latex'):
        """
        :param file: Path to table file to be created
        :param headers: List of table headers
        :param accu: The data accumulator that is a list or dict. Defaults to list
        :param tablefmt: Optional tabulate format. Defaults to latex
        """
        if file is None:
            raise ValueError('The file argument was not supplied')
        self.accu = get_accumulator(accu)
        self.file = file
        self.headers = headers
        self.tablefmt = tablefmt

    def __enter__(self):
        """
        :return: The data accumulator
        """
        return self.accu

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            return
        with open(self.file, 'w') as out:
            out.write(tabulate(self.accu, headers=self.headers, tablefmt=self.tablefmt))
            out.write('\n')


def render_table(rows, headers, tablefmt='simple'):
    """
    Renders rows as a text table for the console
    :param rows: List of rows
    :param headers: List of table headers
    :param tablefmt: Optional tabulate format. Defaults to simple
    :return: The table as a string
    """
    return tabulate(rows, headers=headers, tablefmt=tablefmt)
