"""
Periodic finite-difference grids and the stencil operators shared by both PDE problems.

Fields are stored as numpy arrays of shape (n,) * d in row-major (last axis fastest) order,
so a field's flat vector is ``values.ravel()``.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateCoefficient, GridMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform periodic grid on the unit cube with n points per axis.

    :param d: Dimension
    :param n: Points per axis, at least 2
    """
    d: int
    n: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError('grid dimension must be a positive integer, got %r' % (self.d,))
        if int(self.n) != self.n or self.n < 2:
            raise ValueError('grid needs at least 2 points per axis, got %r' % (self.n,))
        if self.n ** self.d > np.iinfo(np.intp).max:
            raise ValueError('grid with %d^%d points does not fit the index type' % (self.n, self.d))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def cell_volume(self) -> float:
        """h^d, the quadrature weight of one grid point"""
        return self.h ** self.d

    def ravel(self, index: Sequence[int]) -> int:
        """Flat row-major position of a multi-index"""
        return int(np.ravel_multi_index(tuple(index), self.shape))

    def unravel(self, flat: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))

    def to_dict(self):
        return {'d': self.d, 'n': self.n}


@dataclass(frozen=True, eq=False)
class Field:
    """
    Real grid function. ``values`` always has shape ``grid.shape`` and dtype float64.
    """
    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise GridMismatch('field with %d values does not fit a %s grid'
                                   % (values.size, 'x'.join(map(str, self.grid.shape))))
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError('field values must be finite')
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_vector(cls, grid: GridSpec, vector) -> 'Field':
        return cls(np.asarray(vector, dtype=np.float64).reshape(grid.shape), grid)

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> 'Field':
        return cls(np.full(grid.shape, float(value)), grid)

    @property
    def vector(self) -> np.ndarray:
        return self.values.ravel()

    def shifted(self, offsets: Sequence[int]) -> 'Field':
        """Cyclic shift, ``result[i] = self[i + offsets]``"""
        axes = tuple(range(self.grid.d))
        return Field(np.roll(self.values, tuple(-int(o) for o in offsets), axis=axes), self.grid)

    def __len__(self):
        return self.grid.size


@dataclass(frozen=True)
class Direction:
    """Unit vector xi that fixes the macroscopic gradient of the cell problem"""
    xi: Tuple[float, ...]

    def __post_init__(self):
        xi = tuple(float(x) for x in self.xi)
        if abs(np.linalg.norm(xi) - 1.0) > 1e-12:
            raise ValueError('direction %r is not a unit vector' % (xi,))
        object.__setattr__(self, 'xi', xi)

    @classmethod
    def canonical(cls, d: int, axis: int = 0) -> 'Direction':
        xi = [0.0] * d
        xi[axis] = 1.0
        return cls(tuple(xi))

    @property
    def d(self) -> int:
        return len(self.xi)


@dataclass(frozen=True)
class CoefficientBounds:
    """Ellipticity bounds 0 < lambda0 <= a_i <= lambda1"""
    lambda0: float
    lambda1: float

    def __post_init__(self):
        if not 0.0 < self.lambda0 <= self.lambda1:
            raise ValueError('need 0 < lambda0 <= lambda1, got (%r, %r)'
                             % (self.lambda0, self.lambda1))

    def contains(self, a: Field) -> bool:
        return bool(np.all(a.values >= self.lambda0) and np.all(a.values <= self.lambda1))


def check_same_grid(*fields: Field) -> GridSpec:
    """
    Returns the common grid of the supplied fields
    :raises GridMismatch: if the grids differ
    """
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatch('fields live on %r and %r' % (grid, f.grid))
    return grid


def check_positive(a: Field):
    """:raises DegenerateCoefficient: if any entry of a is not strictly positive"""
    bad = np.flatnonzero(a.values.ravel() <= 0.0)
    if bad.size:
        raise DegenerateCoefficient('coefficient has %d non-positive entries, first at %s'
                                    % (bad.size, a.grid.unravel(int(bad[0]))))


def resolve_direction(grid: GridSpec, xi: Optional[Direction]) -> Direction:
    if xi is None:
        return Direction.canonical(grid.d)
    if xi.d != grid.d:
        raise GridMismatch('direction of length %d on a %d-dimensional grid' % (xi.d, grid.d))
    return xi


def periodic_shift(index: Sequence[int], delta: Sequence[int], grid: GridSpec) -> Tuple[int, ...]:
    """
    Adds delta to a multi-index, wrapping every component into [0, n)
    :param index: Multi-index
    :param delta: Signed offset, one entry per axis
    :param grid: The grid
    :return: The wrapped multi-index
    """
    if len(index) != grid.d or len(delta) != grid.d:
        raise GridMismatch('multi-index and offset must have %d components' % grid.d)
    return tuple((int(i) + int(o)) % grid.n for i, o in zip(index, delta))


def half_grid_coeff(a: Field, index: Sequence[int], axis: int, side: int) -> float:
    """
    Coefficient at the midpoint between index and index + side * e_axis
    :param a: Coefficient field
    :param index: Multi-index
    :param axis: Axis k
    :param side: +1 or -1
    :return: (a_i + a_{i +- e_k}) / 2
    """
    if side not in (1, -1):
        raise ValueError('side must be +1 or -1, got %r' % (side,))
    delta = [0] * a.grid.d
    delta[axis] = side
    neighbour = periodic_shift(index, delta, a.grid)
    return 0.5 * (a.values[tuple(index)] + a.values[neighbour])


class DiffusionStencil(object):
    """
    Matrix-free L_a and b_a for one coefficient field.

    Half-grid coefficients are computed once, so repeated applications (a CG solve,
    a gradient-descent trajectory) only pay for the rolls.
    """

    def __init__(self, a: Field):
        self.grid = a.grid
        self.a = a
        # upper[k][i] = a_{i + e_k/2}, lower[k][i] = a_{i - e_k/2}
        self.upper = [0.5 * (a.values + np.roll(a.values, -1, axis=k)) for k in range(a.grid.d)]
        self.lower = [np.roll(up, 1, axis=k) for k, up in enumerate(self.upper)]
        self.inv_h2 = float(a.grid.n) ** 2

    def apply(self, u: np.ndarray) -> np.ndarray:
        """L_a applied to a raw array of shape grid.shape"""
        out = np.zeros_like(u)
        for k in range(self.grid.d):
            up, lo = self.upper[k], self.lower[k]
            out += (up + lo) * u - up * np.roll(u, -1, axis=k) - lo * np.roll(u, 1, axis=k)
        out *= self.inv_h2
        return out

    def rhs(self, xi: Direction) -> np.ndarray:
        """b_a for direction xi as a raw array"""
        out = np.zeros(self.grid.shape)
        for k in range(self.grid.d):
            if xi.xi[k] != 0.0:
                out += xi.xi[k] * (self.upper[k] - self.lower[k])
        out *= float(self.grid.n)
        return out


def apply_La(a: Field, u: Field) -> Field:
    """
    (L_a u)_i = sum_k (-a_{i+e_k/2} u_{i+e_k} + (a_{i-e_k/2} + a_{i+e_k/2}) u_i - a_{i-e_k/2} u_{i-e_k}) / h^2
    """
    grid = check_same_grid(a, u)
    return Field(DiffusionStencil(a).apply(u.values), grid)


def assemble_ba(a: Field, xi: Optional[Direction] = None) -> Field:
    """
    (b_a)_i = sum_k xi_k (a_{i+e_k/2} - a_{i-e_k/2}) / h
    :param a: Coefficient field
    :param xi: Direction, defaults to e_1
    """
    xi = resolve_direction(a.grid, xi)
    return Field(DiffusionStencil(a).rhs(xi), a.grid)


def laplacian_values(u: np.ndarray, n: int) -> np.ndarray:
    out = 2 * u.ndim * u
    for k in range(u.ndim):
        out = out - np.roll(u, -1, axis=k) - np.roll(u, 1, axis=k)
    return out * float(n) ** 2


def apply_laplacian(u: Field) -> Field:
    """Periodic second-difference Laplacian, (Lu)_i = sum_k (-u_{i+e_k} + 2u_i - u_{i-e_k}) / h^2"""
    return Field(laplacian_values(u.values, u.grid.n), u.grid)


def laplacian_matrix(grid: GridSpec) -> sp.csr_matrix:
    """
    Sparse periodic Laplacian in row-major order, matching apply_laplacian.
    Only used where a factorization is needed (the Newton bordered system).
    """
    n = grid.n
    rows = np.repeat(np.arange(n), 3)
    cols = np.stack([np.arange(n), (np.arange(n) + 1) % n, (np.arange(n) - 1) % n], axis=1).ravel()
    vals = np.tile([2.0, -1.0, -1.0], n)
    # duplicates (n = 2) are summed by the conversion
    second = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr() * float(n) ** 2
    total = sp.csr_matrix((grid.size, grid.size))
    for k in range(grid.d):
        before = sp.identity(n ** k, format='csr')
        after = sp.identity(n ** (grid.d - k - 1), format='csr')
        total = total + sp.kron(sp.kron(before, second), after, format='csr')
    return total.tocsr()


def energy(u: Field, a: Field, xi: Optional[Direction] = None) -> float:
    """
    E(u; a) = (h^d / 2) (u^T L_a u - 2 u^T b_a + a^T 1)
    :param u: Trial field
    :param a: Coefficient field
    :param xi: Direction, defaults to e_1
    """
    grid = check_same_grid(u, a)
    return stencil_energy(DiffusionStencil(a), u.values, resolve_direction(grid, xi))


def stencil_energy(stencil: DiffusionStencil, u: np.ndarray, xi: Direction, rhs=None) -> float:
    b = stencil.rhs(xi) if rhs is None else rhs
    quad = np.vdot(u, stencil.apply(u)) - 2.0 * np.vdot(u, b) + stencil.a.values.sum()
    return 0.5 * stencil.grid.cell_volume * float(quad)


def energy_gradient(u: Field, a: Field, xi: Optional[Direction] = None) -> Field:
    """
    True gradient of energy, h^d (L_a u - b_a).
    The un-scaled step of the steepest-descent view corresponds to dt / h^d here.
    """
    grid = check_same_grid(u, a)
    stencil = DiffusionStencil(a)
    xi = resolve_direction(grid, xi)
    return Field(grid.cell_volume * (stencil.apply(u.values) - stencil.rhs(xi)), grid)
