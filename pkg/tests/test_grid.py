import numpy as np
import pytest
from numpy.testing import assert_allclose

from pdesurrogate.errors import DegenerateCoefficient, GridMismatch
from pdesurrogate.grid import (CoefficientBounds, Direction, Field, GridSpec, apply_La,
                               apply_laplacian, assemble_ba, check_positive, energy,
                               energy_gradient, half_grid_coeff, laplacian_matrix,
                               periodic_shift)

from .conftest import random_field
from .oracles import dense_La, dense_ba, dense_laplacian


def test_grid_spec_properties():
    grid = GridSpec(2, 8)
    assert grid.h == 0.125
    assert grid.shape == (8, 8)
    assert grid.size == 64
    assert grid.cell_volume == 1.0 / 64
    assert grid.unravel(grid.ravel((3, 5))) == (3, 5)


@pytest.mark.parametrize('d, n', [(0, 4), (1, 1), (2, 0)])
def test_grid_spec_rejects_bad_sizes(d, n):
    with pytest.raises(ValueError):
        GridSpec(d, n)


def test_field_reshapes_and_checks_size():
    grid = GridSpec(2, 4)
    field = Field(np.arange(16.0), grid)
    assert field.values.shape == (4, 4)
    assert_allclose(field.vector, np.arange(16.0))
    with pytest.raises(GridMismatch):
        Field(np.ones(15), grid)
    with pytest.raises(ValueError):
        Field(np.full(16, np.nan), grid)


def test_periodic_shift_wraps():
    grid = GridSpec(2, 4)
    assert periodic_shift((3, 0), (1, -1), grid) == (0, 3)
    with pytest.raises(GridMismatch):
        periodic_shift((0,), (1,), grid)


def test_field_shift_is_cyclic():
    grid = GridSpec(1, 4)
    field = Field(np.array([1.0, 2.0, 3.0, 4.0]), grid)
    assert_allclose(field.shifted((1,)).values, [2.0, 3.0, 4.0, 1.0])


def test_direction_must_be_unit():
    with pytest.raises(ValueError):
        Direction((1.0, 1.0))
    assert Direction.canonical(3, 1).xi == (0.0, 1.0, 0.0)


@pytest.mark.parametrize('d', [1, 2])
def test_operators_match_dense_assembly(rng, d):
    n = 4
    lap = dense_laplacian(GridSpec(d, n))
    for _ in range(100):
        a = random_field(rng, d, n)
        u = Field(rng.standard_normal(a.grid.shape), a.grid)
        dense = dense_La(a) @ u.vector
        assert np.max(np.abs(apply_La(a, u).vector - dense)) < 1e-12 * np.max(np.abs(dense))
        b = dense_ba(a)
        assert np.max(np.abs(assemble_ba(a).vector - b)) < 1e-12 * np.max(np.abs(b))
        plain = lap @ u.vector
        assert np.max(np.abs(apply_laplacian(u).vector - plain)) < 1e-12 * np.max(np.abs(plain))


@pytest.mark.parametrize('d, n', [(1, 2), (1, 5), (2, 4), (3, 3)])
def test_sparse_laplacian_matches_stencil(rng, d, n):
    grid = GridSpec(d, n)
    u = Field(rng.standard_normal(grid.shape), grid)
    assert_allclose(laplacian_matrix(grid) @ u.vector, apply_laplacian(u).vector,
                    rtol=1e-12, atol=1e-12)


def test_constant_coefficient_has_zero_rhs():
    grid = GridSpec(2, 4)
    a = Field.constant(grid, 2.5)
    assert_allclose(assemble_ba(a).values, 0.0)
    u = Field(np.arange(16.0), grid)
    assert_allclose(apply_La(a, u).values, 2.5 * apply_laplacian(u).values)


def test_operators_reject_mixed_grids(rng):
    a = random_field(rng, 2, 4)
    with pytest.raises(GridMismatch):
        apply_La(a, Field.constant(GridSpec(2, 8), 0.0))


def test_energy_at_zero_is_half_mean_coefficient(rng):
    a = random_field(rng, 2, 8)
    zero = Field.constant(a.grid, 0.0)
    assert energy(zero, a) == 0.5 * a.grid.cell_volume * a.values.sum()


def test_energy_gradient_matches_finite_differences(rng):
    a = random_field(rng, 2, 4)
    u = Field(rng.standard_normal(a.grid.shape), a.grid)
    grad = energy_gradient(u, a).vector
    step = 1e-6
    fd = np.empty(a.grid.size)
    for i in range(a.grid.size):
        e = np.zeros(a.grid.size)
        e[i] = step
        fd[i] = (energy(Field(u.vector + e, a.grid), a)
                 - energy(Field(u.vector - e, a.grid), a)) / (2 * step)
    assert_allclose(fd, grad, rtol=1e-6, atol=1e-8)


def test_coefficient_checks():
    a = Field(np.array([0.5, 0.55, 0.7, 0.9, 1.0, 0.6, 0.8, 0.75]), GridSpec(1, 8))
    assert CoefficientBounds(0.5, 1.0).contains(a)
    assert not CoefficientBounds(0.6, 1.0).contains(a)
    values = a.values.copy()
    values[3] = 0.0
    with pytest.raises(DegenerateCoefficient):
        check_positive(Field(values, a.grid))


@pytest.mark.parametrize('d, n', [(1, 8), (2, 4), (3, 3)])
def test_diffusion_operator_is_symmetric_psd_with_constant_nullspace(rng, d, n):
    for _ in range(20):
        a = random_field(rng, d, n)
        mat = dense_La(a)
        assert np.max(np.abs(mat - mat.T)) <= 1e-12 * np.max(np.abs(mat))
        u = Field(rng.standard_normal(a.grid.shape), a.grid)
        v = Field(rng.standard_normal(a.grid.shape), a.grid)
        uLv = np.vdot(u.vector, apply_La(a, v).vector)
        vLu = np.vdot(v.vector, apply_La(a, u).vector)
        assert abs(uLv - vLu) <= 1e-10 * abs(uLv) + 1e-10
        assert np.vdot(u.vector, apply_La(a, u).vector) >= 0.0
        assert np.linalg.eigvalsh(mat)[0] >= -1e-10 * np.max(np.abs(mat))

        scale = 1e-10 * np.linalg.norm(u.vector) * np.max(np.abs(mat))
        ones = Field.constant(a.grid, 1.0)
        assert np.max(np.abs(apply_La(a, ones).values)) <= 1e-10 * np.max(np.abs(mat))
        assert abs(np.sum(apply_La(a, u).values)) <= scale


@pytest.mark.parametrize('d, n', [(1, 8), (2, 4), (2, 8), (3, 3)])
def test_rhs_and_gradient_sum_to_zero(rng, d, n):
    for _ in range(20):
        a = random_field(rng, d, n)
        for axis in range(d):
            xi = Direction.canonical(d, axis)
            b = assemble_ba(a, xi)
            assert abs(np.sum(b.values)) <= 1e-12 * np.sum(np.abs(a.values)) * n
            u = Field(rng.standard_normal(a.grid.shape), a.grid)
            grad = energy_gradient(u, a, xi)
            assert abs(np.sum(grad.values)) <= 1e-12 * max(1.0, np.max(np.abs(grad.values))) \
                * a.grid.size


def test_half_grid_coefficients():
    constant = Field.constant(GridSpec(2, 4), 1.25)
    for index in [(0, 0), (3, 1), (2, 3)]:
        for axis in (0, 1):
            for side in (1, -1):
                assert half_grid_coeff(constant, index, axis, side) == 1.25
    a = Field(np.array([1.0, 3.0]), GridSpec(1, 2))
    assert half_grid_coeff(a, (0,), 0, 1) == 2.0
    assert half_grid_coeff(a, (1,), 0, 1) == 2.0
    assert half_grid_coeff(a, (0,), 0, -1) == 2.0
    with pytest.raises(ValueError):
        half_grid_coeff(a, (0,), 0, 2)


def test_rhs_two_point_example():
    a = Field(np.array([1.0, 2.0]), GridSpec(1, 2))
    assert_allclose(assemble_ba(a).values, [0.0, 0.0], atol=1e-15)


def test_unit_coefficient_stencil_on_an_indicator():
    grid = GridSpec(2, 4)
    e = np.zeros(grid.shape)
    e[1, 2] = 1.0
    out = apply_La(Field.constant(grid, 1.0), Field(e, grid)).values
    expected = np.zeros(grid.shape)
    expected[1, 2] = 4 * 16.0
    for neighbour in [(0, 2), (2, 2), (1, 1), (1, 3)]:
        expected[neighbour] = -16.0
    assert_allclose(out, expected, rtol=1e-14)


@pytest.mark.parametrize('n', [4, 7, 16])
def test_cosine_is_a_laplacian_eigenvector(n):
    grid = GridSpec(1, n)
    x = np.arange(n) * grid.h
    u = Field(np.cos(2 * np.pi * x), grid)
    lam = (2.0 - 2.0 * np.cos(2 * np.pi * grid.h)) / grid.h ** 2
    assert_allclose(apply_laplacian(u).values, lam * u.values, atol=1e-10 * lam)


@pytest.mark.parametrize('d, n', [(1, 8), (2, 4), (3, 3)])
def test_laplacian_is_the_unit_coefficient_operator(rng, d, n):
    grid = GridSpec(d, n)
    u = Field(rng.standard_normal(grid.shape), grid)
    assert_allclose(apply_La(Field.constant(grid, 1.0), u).values, apply_laplacian(u).values,
                    rtol=1e-13, atol=1e-12 * n ** 2)
    assert_allclose(dense_laplacian(grid) @ u.vector, apply_laplacian(u).vector,
                    rtol=1e-12, atol=1e-12 * n ** 2)
