from math import factorial

import numpy as np
import pytest

from model.errors import DomainError
from model.hermite_wick import (
    hermite_coefficients,
    hermite_eval,
    hermite_recurrence_coefficients,
    hermite_table,
    wick_power,
    wick_powers,
)


@pytest.mark.parametrize("n", range(21))
def test_coefficients_match_recurrence_exactly(n):
    assert tuple(hermite_coefficients(n).coeffs) == hermite_recurrence_coefficients(n)


def test_low_degree_polynomials():
    assert hermite_coefficients(0).coeffs == (1,)
    assert hermite_coefficients(2).coeffs == (-1, 0, 1)
    assert hermite_coefficients(4).coeffs == (3, 0, -6, 0, 1)
    assert hermite_coefficients(7).leading == 1


def test_eval_known_values():
    assert hermite_eval(0, 3.7) == 1.0
    assert hermite_eval(1, 2.0) == 2.0
    assert hermite_eval(2, 2.0) == pytest.approx(3.0)
    assert hermite_eval(3, 2.0) == pytest.approx(2.0)
    assert hermite_eval(4, 0.0) == pytest.approx(3.0)


def test_eval_power_sum_and_recurrence_agree():
    t = np.linspace(-3.5, 3.5, 29)
    table = hermite_table(10, t)
    for n in range(11):
        np.testing.assert_allclose(hermite_eval(n, t), table[n], rtol=1e-10, atol=1e-8)


def test_wick_power_unit_variance_is_hermite():
    z = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(wick_power(z, 1.0, 4), z ** 4 - 6 * z ** 2 + 3)


def test_wick_power_scaling():
    # :z^2: = z^2 - c, :z^3: = z^3 - 3cz
    assert wick_power(1.5, 0.5, 2) == pytest.approx(1.5 ** 2 - 0.5)
    assert wick_power(1.5, 0.5, 3) == pytest.approx(1.5 ** 3 - 3 * 0.5 * 1.5)


def test_wick_powers_stack_matches_single_powers():
    z = np.array([-1.2, 0.3, 2.2])
    c = 0.7
    table = wick_powers(z, c, 6)
    assert table.shape == (7, 3)
    for n in range(7):
        np.testing.assert_allclose(table[n], wick_power(z, c, n), rtol=1e-12, atol=1e-12)


def test_wick_derivative_identity():
    z = np.linspace(-1.5, 1.5, 7)
    c, eps = 0.8, 1e-6
    for n in range(1, 6):
        derivative = (wick_power(z + eps, c, n) - wick_power(z - eps, c, n)) / (2 * eps)
        np.testing.assert_allclose(derivative, n * wick_power(z, c, n - 1), rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("c", [0.0, -1.0])
def test_nonpositive_variance(c):
    with pytest.raises(DomainError):
        wick_power(1.0, c, 2)
    with pytest.raises(DomainError):
        wick_powers(np.ones(2), c, 2)


def test_gaussian_orthogonality():
    rng = np.random.default_rng(2024)
    c = 1.7
    g = rng.normal(scale=np.sqrt(c), size=400000)
    table = wick_powers(g, c, 4)
    for n in range(5):
        for m in range(5):
            prod = table[n] * table[m]
            mean, stderr = prod.mean(), prod.std(ddof=1) / np.sqrt(prod.size)
            expected = factorial(n) * c ** n if n == m else 0.0
            assert abs(mean - expected) <= 4.5 * stderr + 1e-12, (n, m)


@pytest.mark.slow
def test_gaussian_orthogonality_at_acceptance_size():
    rng = np.random.default_rng(7)
    c = 0.3
    g = rng.normal(scale=np.sqrt(c), size=1000000)
    table = wick_powers(g, c, 5)
    for n in range(6):
        for m in range(6):
            prod = table[n] * table[m]
            mean, stderr = prod.mean(), prod.std(ddof=1) / np.sqrt(prod.size)
            expected = factorial(n) * c ** n if n == m else 0.0
            assert abs(mean - expected) <= 4.5 * stderr + 1e-12, (n, m)
