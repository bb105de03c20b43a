"""
Exceptions raised by pdesurrogate.

Argument problems are ValueErrors, numerical failures are SolverErrors.
"""


class GridMismatch(ValueError):
    """Two fields (or a field and an operator) live on different grids"""


class ShapeMismatch(ValueError):
    """Tensor or array shapes do not compose"""


class ArchitectureError(ValueError):
    """A network spec is malformed or is not the architecture an operation requires"""


class InvalidNoiseLevel(ValueError):
    """Relative noise level outside the range for which the descent step bound is positive"""


class ZeroVariance(ValueError):
    """A whitening dimension is constant across the training inputs"""

    def __init__(self, dims):
        self.dims = list(dims)
        super().__init__('zero variance in %d input dimension(s), first %s'
                         % (len(self.dims), self.dims[:5]))


class ZeroTargetNorm(ValueError):
    """The relative error is undefined for an all-zero target vector"""


class ConfigError(ValueError):
    """The run configuration failed validation"""


class DatasetFormatError(ValueError):
    """A dataset or checkpoint file is not in the expected binary format"""


class SolverError(RuntimeError):
    """Base class of numerical failures"""


class NotConverged(SolverError):
    """
    An iterative method hit its iteration limit.
    The best iterate found is kept on the exception so callers can inspect it.
    """

    def __init__(self, message, best=None, **context):
        self.best = best
        self.context = context
        if context:
            message = '%s (%s)' % (message, ', '.join(
                '%s=%s' % kv for kv in sorted(context.items())))
        super().__init__(message)


class DegenerateCoefficient(SolverError):
    """A coefficient field has a non-positive entry"""


class SingularJacobian(SolverError):
    """The Newton bordered system could not be solved"""


class DatasetGenerationError(SolverError):
    """One or more samples failed to label"""

    def __init__(self, failures):
        self.failures = dict(failures)
        self.indices = sorted(self.failures)
        super().__init__('%d sample(s) failed to label: %s'
                         % (len(self.indices), self.indices))
