import numpy as np
import pytest

from model.dirichlet_form import (
    SCHEME_SELF_CHECK,
    apply_A,
    constant_function,
    coordinate_bump,
    coordinate_monomial,
    coordinate_product,
    dirichlet_energy,
    gaussian_bump_function,
    generator_limit_check,
    invariance_check,
    markov_checks,
    symmetry_check,
)
from model.errors import ConfigurationError, DimensionError
from model.parabolic_solver import Grid, gaussian_bump, linear_drift, solve_cauchy
from validation.apriori_checks import gaussian_measure
from validation.report import FAIL, INCONCLUSIVE, PASS


@pytest.mark.parametrize("f", [coordinate_monomial(2, 3), coordinate_product(1, 3), gaussian_bump_function(3, 0.8),
                               coordinate_bump(2, 1.5)])
def test_analytic_gradients(f, rng):
    points = rng.normal(size=(50, 3))
    assert f.check_gradient(points) < 1e-6


def test_bounds_of_bounded_functions(rng):
    points = 3.0 * rng.normal(size=(200, 2))
    assert gaussian_bump_function(2, 0.5).check_bounds(points)
    assert coordinate_bump(1).check_bounds(points)


def test_sum_of_cylinder_functions(rng):
    f = coordinate_monomial(1, 2) + coordinate_bump(3)
    assert f.dimension == 3
    x = rng.normal(size=(5, 3))
    np.testing.assert_allclose(f.value(x), x[:, 0] ** 2 + np.exp(-x[:, 2] ** 2 / 2))
    assert f.check_gradient(x) < 1e-6
    assert f.hessian(x).shape == (5, 3, 3)


def test_invalid_functions():
    with pytest.raises(ConfigurationError):
        coordinate_monomial(0)
    with pytest.raises(ConfigurationError):
        coordinate_product(2, 2)
    with pytest.raises(DimensionError):
        coordinate_monomial(3).value(np.ones((2, 2)))


def test_apply_A_closed_form():
    lam = 2.0
    x = np.array([[0.5], [1.5], [-1.0]])
    beta = -lam * x
    # A x1^2 = -2 + 2 lambda x1^2
    np.testing.assert_allclose(apply_A(coordinate_monomial(1, 2), beta, x), -2.0 + 2.0 * lam * x[:, 0] ** 2)
    np.testing.assert_allclose(apply_A(constant_function(3.0), beta, x), 0.0)
    assert apply_A(coordinate_monomial(1, 1), lambda y: -lam * y, np.array([0.5])) == pytest.approx(1.0)


def test_apply_A_shape_mismatch():
    with pytest.raises(DimensionError):
        apply_A(coordinate_monomial(2), np.zeros((3, 1)), np.zeros((3, 2)))


def test_energy_nonnegative_and_exact_on_constants(gaussian_set):
    f = gaussian_bump_function(2, 0.7)
    assert dirichlet_energy(f, f, gaussian_set).value >= 0.0
    assert dirichlet_energy(constant_function(2.0, 3), f, gaussian_set).value == 0.0


def test_energy_of_coordinate(gaussian_set):
    estimate = dirichlet_energy(coordinate_monomial(1), coordinate_monomial(1), gaussian_set)
    assert estimate.value == pytest.approx(1.0)
    assert estimate.status == PASS


@pytest.mark.parametrize("f,g", [(coordinate_monomial(1), coordinate_monomial(2)),
                                 (coordinate_monomial(1), coordinate_monomial(1)),
                                 (coordinate_bump(1), gaussian_bump_function(3, 1.0)),
                                 (coordinate_monomial(2, 2), coordinate_product(1, 2)),
                                 (constant_function(1.0), constant_function(1.0))])
def test_symmetry(f, g, gaussian_set):
    report = symmetry_check(f, g, gaussian_set)
    assert report.status == PASS


def test_symmetry_of_coordinate_estimates(gaussian_set):
    report = symmetry_check(coordinate_monomial(1), coordinate_monomial(1), gaussian_set)
    for key in ("Af_g", "f_Ag", "energy"):
        value, stderr = report.estimates[key]
        assert abs(value - 1.0) <= 4.5 * stderr + 1e-12


@pytest.mark.parametrize("f", [coordinate_monomial(1, 2), coordinate_bump(2), coordinate_product(1, 3)])
def test_invariance(f, gaussian_set):
    assert invariance_check(f, gaussian_set).status == PASS


def test_wrong_drift_breaks_invariance(gaussian_set):
    report = invariance_check(coordinate_monomial(1, 2), gaussian_set, beta=-3.0 * gaussian_set.coordinates)
    assert report.status == FAIL


def test_markov_suite_on_ou():
    grid = Grid(2, 6.0, 49)
    ou = linear_drift(-np.eye(2), "ou")
    weights = gaussian_measure(np.ones(2)).grid_weights(grid)
    sol = solve_cauchy(ou, lambda p: gaussian_bump(p, 0.7), 0.5, grid, n_snapshots=4, leak_weights=weights)
    report = markov_checks(sol)
    assert report.status == PASS
    assert report.items["positivity"]["applicable"]
    assert report.items["conservation"]["max_deviation"] <= 1e-12


def test_conservation_is_reported_as_a_scheme_self_check():
    grid = Grid(1, 6.0, 61)
    sol = solve_cauchy(linear_drift([[-1.0]]), lambda p: gaussian_bump(p, 0.7), 0.2, grid, n_snapshots=2)
    report = markov_checks(sol)
    assert report.items["conservation"]["kind"] == SCHEME_SELF_CHECK
    assert any(SCHEME_SELF_CHECK in note for note in report.notes)


def test_markov_suite_uncertified_is_inconclusive():
    grid = Grid(1, 2.0, 41)
    sol = solve_cauchy(linear_drift([[-1.0]]), lambda p: gaussian_bump(p, 2.0), 0.2, grid, n_snapshots=2)
    assert markov_checks(sol).status == INCONCLUSIVE


def test_generator_limit_matches_apply_A():
    grid = Grid(1, 6.0, 121)
    ou = linear_drift([[-1.0]], "ou")
    report = generator_limit_check(gaussian_bump_function(1, 1.0), ou, grid, rtol=1e-2)
    assert report.status == PASS


def test_generator_limit_rejects_wide_functions():
    with pytest.raises(DimensionError):
        generator_limit_check(coordinate_product(1, 2), linear_drift([[-1.0]]), Grid(1, 2.0, 21))
