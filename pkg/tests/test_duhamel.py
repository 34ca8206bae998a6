import numpy as np
import pytest

from model.errors import ConfigurationError, DomainError
from model.parabolic_solver import Grid, gaussian_bump, linear_drift
from validation.duhamel import (
    build_projected_drift,
    convergence_study,
    cutoff_bounds,
    duhamel_gap,
    duhamel_gap_l1,
    exact_ladder,
    gap_monotonicity,
    linear_gaussian_ladder,
    lp_gap,
    lp_uniqueness_interval,
    parse_schedule,
    required_alpha_exponent,
    smooth_cutoff,
    smooth_cutoff_gradient,
    solve_reference,
    solve_rung,
    tanh_ladder,
    theorem4_exponent,
    truncate_drift,
    validate_schedule,
)


def bump(x):
    return gaussian_bump(x, width=0.7)


@pytest.fixture(scope="module")
def small_grid():
    return Grid(2, 5.0, 21)


def test_truncate_drift_zeroes_trailing_components():
    b = truncate_drift(linear_drift(-np.diag([1.0, 2.0, 3.0])), 2)
    x = np.ones((3, 4))
    np.testing.assert_allclose(b(x)[:, 0], [-1.0, -2.0, 0.0])
    J = b.jacobian(x)
    assert np.all(J[:, 2] == 0.0)
    assert J[1, 1, 0] == -2.0


def test_effective_dimension_and_projection():
    ladder = linear_gaussian_ladder(3)
    assert ladder.effective_dimension(0, 2) == 2
    b = build_projected_drift(ladder, 0, 1)
    np.testing.assert_allclose(b(np.ones((3, 1)))[:, 0], [-1.0, 0.0, 0.0])
    assert b.alpha_part is not None and b.delta_part is not None


@pytest.mark.parametrize("rung", [(-1, 0), (0, 4)])
def test_projection_rejects_bad_rungs(rung):
    with pytest.raises(ConfigurationError) as e:
        build_projected_drift(linear_gaussian_ladder(3), *rung)
    assert e.value.key == "schedule"


def test_ladder_rejects_large_ambient_dimension():
    with pytest.raises(ConfigurationError):
        linear_gaussian_ladder(4)


def test_smooth_cutoff_plateau_and_slope():
    r = np.linspace(0.0, 5.0, 2001)
    x = np.stack([r, np.zeros_like(r)])
    chi = smooth_cutoff(x, 2.0)
    assert np.all(chi[r <= 2.0] == 1.0)
    assert np.all(chi[r >= 3.0] == 0.0)
    assert np.all(np.diff(chi) <= 1e-15)
    slope = np.sqrt(np.sum(smooth_cutoff_gradient(x, 2.0) ** 2, axis=0))
    assert slope.max() <= 2.0 + 1e-9
    np.testing.assert_allclose(slope.max(), np.max(np.abs(np.gradient(chi, r))), rtol=1e-2)


def test_cutoff_bounds_are_uniform_in_k():
    x = np.stack(np.meshgrid(np.linspace(-6, 6, 121), np.linspace(-6, 6, 121), indexing="ij"))
    bounds = cutoff_bounds([1.0, 2.0, 3.0], x)
    assert bounds["sup_chi"] == 1.0
    assert bounds["sup_grad_chi"] <= 2.0 + 1e-9


def test_lp_interval_values():
    assert lp_uniqueness_interval(1.0) == (1.5, np.inf)
    p_lo, p_hi = lp_uniqueness_interval(0.25)
    assert p_lo == pytest.approx(1.0 + 1.0 / 1.5)
    assert p_hi == pytest.approx(3.0)


def test_lp_interval_grows_with_eps0():
    intervals = [lp_uniqueness_interval(e) for e in np.linspace(0.05, 1.0, 20)]
    for (lo0, hi0), (lo1, hi1) in zip(intervals, intervals[1:]):
        assert lo1 <= lo0 and hi0 <= hi1


@pytest.mark.parametrize("eps0", [0.0, -0.5, 1.2])
def test_lp_interval_domain(eps0):
    with pytest.raises(DomainError):
        lp_uniqueness_interval(eps0)


def test_integrability_exponents():
    assert required_alpha_exponent(1.5) == 3.0
    assert theorem4_exponent(1.0) == 2.0
    assert theorem4_exponent(1.5) == pytest.approx(6.0)
    with pytest.raises(DomainError):
        required_alpha_exponent(1.0)
    with pytest.raises(DomainError):
        theorem4_exponent(2.0)


def test_parse_schedule():
    assert parse_schedule("0:1, 0:2;1:2") == [(0, 1), (0, 2), (1, 2)]


@pytest.mark.parametrize("text", ["", "0:1:2", "a:b", "0:2,0:1", "1:0,0:3", "0:1,0:1"])
def test_bad_schedules(text):
    with pytest.raises(ConfigurationError) as e:
        parse_schedule(text)
    assert e.value.key == "schedule"


def test_validate_schedule_accepts_advancing_n():
    assert validate_schedule([(0, 3), (1, 0)]) == [(0, 3), (1, 0)]


def test_exact_rung_has_no_gap(small_grid):
    ladder = exact_ladder(2)
    reference = solve_reference(ladder, bump, 0.2, small_grid, n_snapshots=4)
    report = duhamel_gap(ladder, 0, 0, bump, 0.2, reference)
    assert np.max(np.abs(report.lhs)) <= 1e-10
    np.testing.assert_allclose(report.rhs, 0.0)
    assert report.passed


def test_linear_gaussian_ladder_bound_and_monotone_gap(small_grid):
    ladder = linear_gaussian_ladder(2)
    table = convergence_study(ladder, bump, 0.2, [(0, 0), (0, 1), (0, 2)], small_grid, n_snapshots=4, threads=2)
    assert list(table.columns) == ["n", "m", "norm", "t", "LHS", "RHS", "margin", "budget", "pass"]
    assert len(table) == 3 * 2 * 5
    assert table["pass"].all()

    final = table[(table["t"] == table["t"].max()) & (table["norm"] == "L2")].sort_values("m")
    gaps = final["LHS"].to_numpy()
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 1e-10
    assert gap_monotonicity(table) == {"L1[n=0]": True, "L2[n=0]": True}


def test_threads_do_not_change_the_table(small_grid):
    ladder = linear_gaussian_ladder(2)
    one = convergence_study(ladder, bump, 0.1, [(0, 0), (0, 1)], small_grid, n_snapshots=2, threads=1)
    two = convergence_study(ladder, bump, 0.1, [(0, 0), (0, 1)], small_grid, n_snapshots=2, threads=2)
    assert one.equals(two)


def test_l1_gap_on_tanh_ladder(small_grid):
    ladder = tanh_ladder(2, strength=0.5)
    reference = solve_reference(ladder, bump, 0.1, small_grid, n_snapshots=2)
    report = duhamel_gap_l1(ladder, 1, 1, bump, 0.1, reference)
    assert report.terms["d_nm"] == 1
    assert report.terms["alpha_error"] > 0 and report.terms["delta_error"] > 0
    assert report.passed


def test_missing_gamma_defaults_to_zero(caplog):
    ladder = linear_gaussian_ladder(2)
    ladder.gamma = None
    assert ladder.resolved_gamma() == 0.0
    assert "gamma = 0" in caplog.text


def test_lp_gaps_of_a_rung(small_grid):
    ladder = linear_gaussian_ladder(2)
    reference = solve_reference(ladder, bump, 0.1, small_grid, n_snapshots=2)
    rung = solve_rung(ladder, 0, 0, bump, 0.1, small_grid, times=reference.times, n_snapshots=1)
    gaps = lp_gap(reference, rung, ladder.measure, 0.1)
    assert list(gaps) == ["L1", "L2", "L4", "Linf"]
    assert 0.0 < gaps["L1"] <= gaps["L2"] <= gaps["L4"] <= gaps["Linf"] * (1.0 + 1e-9)
