"""
Command line entry point.

    pdesurrogate generate --config run.json [--workers K] [--seed S]
    pdesurrogate solve --task nlse --input field.csv
    pdesurrogate train --config run.json
    pdesurrogate eval --checkpoint model.pdesurm1 --dataset validation.psd1
    pdesurrogate verify --config run.json [--workers K]
    pdesurrogate fit-reciprocal --checkpoint model.pdesurm1

Exit codes: 0 success, 1 configuration or argument error, 2 numerical failure or malformed data.
"""
import argparse
import logging
import sys

import numpy as np

from . import __version__
from .config import load_config
from .elliptic import DEFAULT_TOL, effective_conductance
from .errors import (DatasetFormatError, GridMismatch, ShapeMismatch, SolverError,
                     ZeroVariance)
from .fs.binary import DATASET_MAGIC
from .fs.formatters import float_formatter, format_output, mean_std_formatter, sci_formatter
from .fs.readers import read_csv_matrix
from .fs.savers import AutoSaveCsv, AutoSLatexTable, render_table
from .grid import Field, GridSpec
from .nlse import DEFAULT_SIGMA, DEFAULT_STEP, homotopy_path, variational_ground_state
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.network import extract_stage1_response, fit_reciprocal, param_count
from .sampler import (Task, apply_whitening, compute_whiten_stats, generate_dataset, load_dataset,
                      save_dataset)
from .theory import run_trials, write_report
from .train import predict, relative_error, train, write_metrics

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s :: %(levelname)s :: %(name)s :: %(message)s'
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2
DATA_ERRORS = (ShapeMismatch, GridMismatch, ZeroVariance, DatasetFormatError)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad arguments, which is reserved for numerical failures here"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, '%s: error: %s\n' % (self.prog, message))


def configure_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)


def _emit(value):
    sys.stdout.write(format_output(value, float_formatter))


def cmd_generate(args):
    config = load_config(args.config, args.seed)
    splits = ['train', 'validation'] if args.split == 'both' else [args.split]
    rows = []
    for split in splits:
        spec = config.sampling_spec(split)
        dataset = generate_dataset(spec, args.workers, config.solver, progress=args.progress)
        if split == 'train' and spec.count >= 2 and spec.low < spec.high:
            dataset.whiten = compute_whiten_stats(dataset.inputs)
        path = config.paths.train_data if split == 'train' else config.paths.validation_data
        save_dataset(dataset, path, extra={'config_hash': config.config_hash, 'split': split})
        mean, std = dataset.target_summary()
        rows.append([split, spec.task.label, spec.grid.n, spec.grid.d, spec.count,
                     mean_std_formatter(mean, std)])
    headers = ['split', 'task', 'n', 'd', 'samples', 'target mean ± std']
    print(render_table(rows, headers))
    table = args.table or config.paths.table
    if table:
        with AutoSLatexTable(table, headers) as out:
            out.extend(rows)
    return EXIT_OK


def _read_field(args) -> Field:
    with open(args.input, 'rb') as handle:
        magic = handle.read(len(DATASET_MAGIC))
    if magic == DATASET_MAGIC:
        dataset = load_dataset(args.input)
        if not 0 <= args.index < len(dataset):
            raise IndexError('record %d outside [0, %d)' % (args.index, len(dataset)))
        return dataset.coefficient(args.index)
    matrix = read_csv_matrix(args.input)
    rows, cols = matrix.shape
    d = args.d
    if d is None:
        if rows == 1 or cols == 1:
            d = 1
        elif rows == cols:
            d = 2
        else:
            raise ShapeMismatch('cannot infer the dimension of a %dx%d csv field, pass --d' % (rows, cols))
    n = int(round(matrix.size ** (1.0 / d)))
    if n ** d != matrix.size:
        raise ShapeMismatch('%d values do not form a %d-dimensional grid' % (matrix.size, d))
    return Field.from_vector(GridSpec(d, n), matrix.ravel())


def cmd_solve(args):
    try:
        a = _read_field(args)
    except (OSError, ValueError, IndexError) as err:
        logger.error('cannot read %s: %s', args.input, err)
        return EXIT_NUMERICAL
    task = Task.parse(args.task)
    try:
        if task is Task.ELLIPTIC:
            value = effective_conductance(a, tol=args.tol)
        elif args.method == 'variational':
            value = variational_ground_state(a, args.sigma, tol=max(args.tol, 1e-9)).e0
        else:
            states = homotopy_path(a, args.sigma, args.step, args.tol)
            for state in states:
                logger.debug('s=%.3g E=%.17g residual %.2e', state.s, state.e0, state.residual_norm)
            value = states[-1].e0
    except (SolverError, ValueError) as err:
        logger.error('solve failed: %s', err)
        return EXIT_NUMERICAL
    _emit(value)
    return EXIT_OK


def cmd_train(args):
    config = load_config(args.config, args.seed)
    try:
        train_set = load_dataset(config.paths.train_data)
        val_set = load_dataset(config.paths.validation_data)
        whiten = train_set.whiten or compute_whiten_stats(train_set.inputs)
        spec = config.network()
        params, history = train(train_set, val_set, spec, config.train, whiten, args.progress)
    except DATA_ERRORS as err:
        logger.error('training data does not fit: %s', err)
        return EXIT_NUMERICAL
    best = history.best_epoch - 1
    meta = {'config_hash': config.config_hash, 'task': config.task.label,
            'train_config': config.train.to_dict(), 'best_epoch': history.best_epoch,
            'train_relerr': history.train_relerr[best], 'val_relerr': history.val_relerr[best],
            'package_version': __version__}
    save_checkpoint(config.paths.checkpoint, spec, params, whiten, meta)
    write_metrics(history, config.paths.metrics, comments=['config_hash %s' % config.config_hash])
    headers = ['n', 'architecture', 'parameters', 'training error', 'validation error']
    row = [config.grid.n, config.architecture.kind, param_count(spec),
           sci_formatter(history.train_relerr[best]), sci_formatter(history.val_relerr[best])]
    print(render_table([row], headers))
    table = args.table or config.paths.table
    if table:
        with AutoSLatexTable(table, headers) as out:
            out.append(row)
    return EXIT_OK


def _hash_comments(model):
    config_hash = model.metadata.get('config_hash')
    return [] if config_hash is None else ['config_hash %s' % config_hash]


def cmd_eval(args):
    paths = load_config(args.config).paths if args.config else None
    checkpoint = args.checkpoint or (paths and paths.checkpoint)
    dataset_path = args.dataset or (paths and paths.validation_data)
    output = args.output or (paths and paths.predictions)
    if not checkpoint or not dataset_path:
        raise ValueError('eval needs --checkpoint and --dataset (or --config)')
    model = load_checkpoint(checkpoint)
    try:
        dataset = load_dataset(dataset_path)
        inputs = dataset.inputs if model.whiten is None else apply_whitening(dataset.inputs, model.whiten)
        preds = predict(model.spec, model.params, inputs)
        error = relative_error(preds, dataset.targets)
    except DATA_ERRORS as err:
        logger.error('dataset does not fit the checkpoint: %s', err)
        return EXIT_NUMERICAL
    if output:
        with AutoSaveCsv(output, ['index', 'target', 'prediction'],
                         comments=_hash_comments(model)) as rows:
            rows.extend(dict(index=i, target=repr(float(t)), prediction=repr(float(p)))
                        for i, (t, p) in enumerate(zip(dataset.targets, preds)))
    _emit(error)
    return EXIT_OK


def cmd_verify(args):
    config = load_config(args.config, args.seed)
    results = run_trials(config.theory, args.workers, progress=args.progress)
    write_report(results, config.paths.report, comments=['config_hash %s' % config.config_hash])
    rows = []
    for c in config.theory.c_values:
        group = [r for r in results if r.c == c]
        rows.append([c, len(group), sum(len(r.report.descent_violations) for r in group),
                     max(r.report.slope for r in group),
                     max(r.report.c_fit / r.report.c_bound for r in group),
                     sum(r.report.ok for r in group)])
    print(render_table(rows, ['c', 'trials', 'descent violations', 'max slope',
                              'max C_fit / C_bound', 'passed']))
    return EXIT_OK if all(r.report.ok for r in results) else EXIT_NUMERICAL


def cmd_fit_reciprocal(args):
    paths = load_config(args.config).paths if args.config else None
    checkpoint = args.checkpoint or (paths and paths.checkpoint)
    output = args.output or (paths and paths.curve)
    if not checkpoint:
        raise ValueError('fit-reciprocal needs --checkpoint (or --config)')
    model = load_checkpoint(checkpoint)
    xs = np.linspace(args.low, args.high, args.points)
    response = extract_stage1_response(model.spec, model.params, xs, model.whiten)
    fit = fit_reciprocal(xs, response)
    if output:
        with AutoSaveCsv(output, ['x', 'response', 'fit'], comments=_hash_comments(model)) as rows:
            rows.extend(dict(x=repr(float(x)), response=repr(float(y)),
                             fit=repr(fit.beta1 / x + fit.beta2)) for x, y in zip(xs, response))
    print(render_table([[fit.beta1, fit.beta2, fit.r2]], ['beta1', 'beta2', 'R^2'],
                       tablefmt='plain'))
    return EXIT_OK


def build_parser():
    parser = _Parser(prog='pdesurrogate', description='PDE surrogate toolkit')
    parser.add_argument('--version', action='version', version=__version__)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='warnings only')
    commands = parser.add_subparsers(dest='command', parser_class=_Parser)
    commands.required = True

    common = _Parser(add_help=False)
    common.add_argument('--config', help='json run config')
    common.add_argument('--workers', type=int, default=1, help='worker processes')
    common.add_argument('--seed', type=int, default=None, help='override the run seed')
    common.add_argument('--progress', action='store_true', help='show progress bars')

    gen = commands.add_parser('generate', parents=[common], help='sample and label datasets')
    gen.add_argument('--split', choices=['train', 'validation', 'both'], default='both')
    gen.add_argument('--table', help='also write the summary as a LaTeX table')
    gen.set_defaults(func=cmd_generate, needs_config=True)

    solve = commands.add_parser('solve', parents=[common], help='label a single coefficient field')
    solve.add_argument('--task', required=True, choices=['elliptic', 'nlse'])
    solve.add_argument('--input', required=True, help='csv field or PSD1 dataset')
    solve.add_argument('--index', type=int, default=0, help='record of a PSD1 input')
    solve.add_argument('--d', type=int, default=None, help='dimension of a csv field')
    solve.add_argument('--method', choices=['homotopy', 'variational'], default='homotopy')
    solve.add_argument('--tol', type=float, default=DEFAULT_TOL)
    solve.add_argument('--sigma', type=float, default=DEFAULT_SIGMA)
    solve.add_argument('--step', type=float, default=DEFAULT_STEP)
    solve.set_defaults(func=cmd_solve, needs_config=False)

    trn = commands.add_parser('train', parents=[common], help='train a surrogate')
    trn.add_argument('--table', help='also write the result row as a LaTeX table')
    trn.set_defaults(func=cmd_train, needs_config=True)

    evl = commands.add_parser('eval', parents=[common], help='relative error of a checkpoint')
    evl.add_argument('--checkpoint')
    evl.add_argument('--dataset')
    evl.add_argument('--output', help='per-sample predictions csv')
    evl.set_defaults(func=cmd_eval, needs_config=False)

    ver = commands.add_parser('verify', parents=[common], help='noisy gradient descent checks')
    ver.set_defaults(func=cmd_verify, needs_config=True)

    fit = commands.add_parser('fit-reciprocal', parents=[common],
                              help='fit beta1/x + beta2 to the stage-1 response')
    fit.add_argument('--checkpoint')
    fit.add_argument('--output', help='curve csv')
    fit.add_argument('--points', type=int, default=200)
    fit.add_argument('--low', type=float, default=0.3)
    fit.add_argument('--high', type=float, default=1.5)
    fit.set_defaults(func=cmd_fit_reciprocal, needs_config=False)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    if args.needs_config and not args.config:
        parser.error('%s needs --config' % args.command)
    try:
        return args.func(args)
    except SolverError as err:
        logger.error('%s', err)
        return EXIT_NUMERICAL
    except DATA_ERRORS as err:
        logger.error('%s', err)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as err:
        logger.error('%s', err)
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
