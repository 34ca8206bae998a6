import numpy as np
import pytest

from model.dirichlet_form import coordinate_bump, coordinate_monomial
from model.errors import ConfigurationError, DimensionError
from model.free_field import FieldSample, RectangleDomain, build_modes, sample_free_field
from model.p_phi2 import (
    WeightedSampleSet,
    WickSpec,
    check_alpha_refinement,
    check_ibp,
    check_theorem1_conditions,
    delta_tail_norms,
    density_phi,
    drift_alpha,
    drift_beta,
    drift_delta,
    interaction,
    quadrature_stability,
    sample_nu,
    wick_integral,
)
from validation.report import INCONCLUSIVE, PASS

QUARTIC = (0.0, 0.0, 0.0, 0.0, 0.1)


@pytest.fixture(scope="module")
def small_modes():
    return build_modes(RectangleDomain(), 4)


@pytest.fixture(scope="module")
def quartic_set(small_modes):
    spec = WickSpec(QUARTIC, K=4)
    return spec, sample_nu(spec, small_modes, count=20000, seed=5, batch_size=2500)


def test_spec_invariants():
    assert WickSpec((0.0,), K=4).is_free
    assert WickSpec(QUARTIC, K=4).degree == 4
    with pytest.raises(ConfigurationError):
        WickSpec((0.0, 0.0, 0.0, 0.0, -0.1), K=4)
    with pytest.raises(ConfigurationError):
        WickSpec((0.0, 0.0, 0.0, 0.1), K=4)
    with pytest.raises(ConfigurationError):
        WickSpec(QUARTIC, K=4, alpha_idx=0.4, delta_idx=1.0)
    with pytest.raises(ConfigurationError):
        WickSpec(QUARTIC, K=0)
    # the linear interaction is only reachable with the invariants switched off
    assert WickSpec((0.0, 0.5), K=4, check_invariants=False).degree == 1


def test_spec_from_string():
    spec = WickSpec.from_string("0,0,0.05,0,0.1", K=8)
    assert spec.coefficients == (0.0, 0.0, 0.05, 0.0, 0.1)
    with pytest.raises(ConfigurationError):
        WickSpec.from_string("0,x", K=8)


def test_bookkeeping_exponents(small_modes):
    spec = WickSpec(QUARTIC, K=4, alpha_idx=1.0, delta_idx=1.0)
    bookkeeping = spec.bookkeeping(small_modes)
    lambdas = small_modes.eigenvalues
    np.testing.assert_allclose(bookkeeping.t_eigenvalues, lambdas)
    np.testing.assert_allclose(bookkeeping.delta_factor, -1.0)
    np.testing.assert_allclose(bookkeeping.alpha_factor, 1.0 / -lambdas)
    np.testing.assert_allclose(bookkeeping.rigged_variances, 1.0)
    z = np.arange(1.0, 5.0)
    np.testing.assert_allclose(bookkeeping.from_rigged(bookkeeping.to_rigged(z)), z)
    np.testing.assert_allclose(bookkeeping.to_rigged(z), z * np.sqrt(lambdas))

    shifted = WickSpec(QUARTIC, K=4, alpha_idx=1.5, delta_idx=0.5).bookkeeping(small_modes)
    np.testing.assert_allclose(shifted.t_eigenvalues, lambdas)
    np.testing.assert_allclose(shifted.delta_factor, -lambdas ** -0.5)
    np.testing.assert_allclose(shifted.rigged_variances, lambdas ** 0.5)
    np.testing.assert_allclose(shifted.derivative_scale, lambdas ** -0.75)


def test_wick_integrals_of_low_degree(small_modes):
    sample = FieldSample(np.array([0.3, -1.0, 2.0, 0.5]))
    # on the unit square e_1 = 1, so :z^1:(1) = z_1 and :z^0:(1) = |Lambda|
    assert wick_integral(sample, small_modes, None, 0) == pytest.approx(1.0)
    assert wick_integral(sample, small_modes, None, 1) == pytest.approx(0.3)
    assert wick_integral(sample, small_modes, 2, 1) == pytest.approx(-1.0)


def test_second_wick_power_is_centered(small_modes):
    samples = sample_free_field(small_modes, 3, count=40000)
    values = wick_integral(samples, small_modes, None, 2)
    assert abs(values.mean()) <= 4.5 * values.std(ddof=1) / np.sqrt(values.size)


def test_linear_interaction(small_modes):
    spec = WickSpec((0.0, 0.5), K=4, check_invariants=False)
    sample = FieldSample(np.array([0.8, 0.1, -0.2, 0.4]))
    assert interaction(sample, spec, small_modes) == pytest.approx(0.4)
    alpha = drift_alpha(sample, spec, small_modes)
    np.testing.assert_allclose(alpha, [-0.5 / small_modes.eigenvalues[0], 0.0, 0.0, 0.0], atol=1e-12)
    assert density_phi(sample, spec, small_modes) == pytest.approx(np.exp(-0.2))


def test_free_drift_is_linear(small_modes):
    spec = WickSpec((0.0,), K=4)
    sample = FieldSample(np.array([1.0, 2.0, -1.0, 0.5]))
    np.testing.assert_allclose(drift_alpha(sample, spec, small_modes), 0.0)
    np.testing.assert_allclose(drift_delta(sample, spec, small_modes), -sample.coeffs)
    np.testing.assert_allclose(drift_beta(sample, spec, small_modes),
                               -small_modes.eigenvalues ** 0.5 * sample.coeffs)


def test_beta_combines_both_parts(small_modes):
    spec = WickSpec(QUARTIC, K=4)
    sample = sample_free_field(small_modes, 9, count=6)
    bookkeeping = spec.bookkeeping(small_modes)
    expected = bookkeeping.to_rigged(drift_alpha(sample, spec, small_modes) + drift_delta(sample, spec, small_modes))
    np.testing.assert_allclose(drift_beta(sample, spec, small_modes), expected)


def test_quadrature_is_stable(small_modes):
    spec = WickSpec(QUARTIC, K=4)
    report = quadrature_stability(sample_free_field(small_modes, 1, count=8), spec, small_modes)
    assert report["stable"]
    assert report["refined_order"] == 2 * report["order"]


def test_free_weights_are_uniform(small_modes):
    sample_set = sample_nu(WickSpec((0.0,), K=4), small_modes, count=500, seed=0, batch_size=128)
    np.testing.assert_allclose(sample_set.weights, 1.0 / 500)
    assert sample_set.ess == pytest.approx(500.0)
    assert sample_set.expectation(np.ones(500))[0] == pytest.approx(1.0)


def test_sampling_does_not_depend_on_threads(small_modes):
    spec = WickSpec(QUARTIC, K=4)
    one = sample_nu(spec, small_modes, count=3000, seed=4, batch_size=500, threads=1)
    four = sample_nu(spec, small_modes, count=3000, seed=4, batch_size=500, threads=4)
    np.testing.assert_array_equal(one.coordinates, four.coordinates)
    np.testing.assert_array_equal(one.log_weights, four.log_weights)


def test_sample_nu_rejects_bad_input(small_modes):
    with pytest.raises(ConfigurationError):
        sample_nu(WickSpec(QUARTIC, K=4), small_modes, count=0, seed=0)
    with pytest.raises(DimensionError):
        sample_nu(WickSpec(QUARTIC, K=8), small_modes, count=10, seed=0)


def test_degenerate_weights_are_inconclusive():
    log_weights = np.array([0.0, -50.0, -50.0, -50.0])
    sample_set = WeightedSampleSet(FieldSample(np.zeros((4, 2))), log_weights, seed=0, beta=np.zeros((4, 2)),
                                   ess_floor=0.5)
    assert sample_set.degenerate
    spec = WickSpec((0.0,), K=2)
    modes = build_modes(RectangleDomain(), 2)
    report = check_ibp(spec, modes, coordinate_monomial(1), 1, sample_set)
    assert report.status == INCONCLUSIVE


def test_free_ibp_analytic_and_sampled(small_modes):
    spec = WickSpec((0.0,), K=4)
    sample_set = sample_nu(spec, small_modes, count=20000, seed=2)
    report = check_ibp(spec, small_modes, coordinate_monomial(1, 3), 1, sample_set)
    assert report.details["analytic"]["status"] == PASS
    assert report.details["analytic"]["lhs"] == pytest.approx(3.0)
    assert report.status == PASS


def test_quartic_ibp(small_modes, quartic_set):
    spec, sample_set = quartic_set
    assert sample_set.ess_fraction >= 0.2
    for j, f in ((1, coordinate_monomial(1)), (2, coordinate_bump(2)), (1, coordinate_bump(2))):
        assert check_ibp(spec, small_modes, f, j, sample_set).status == PASS


def test_ibp_direction_out_of_range(small_modes, quartic_set):
    spec, sample_set = quartic_set
    with pytest.raises(DimensionError):
        check_ibp(spec, small_modes, coordinate_monomial(1), 5, sample_set)


def test_delta_tails_decrease(small_modes, quartic_set):
    spec, sample_set = quartic_set
    rows = delta_tail_norms(spec, small_modes, sample_set, [1, 2, 3, 4])
    values = [row["value"] for row in rows]
    assert all(a > b for a, b in zip(values, values[1:3]))
    assert values[-1] == 0.0


def test_theorem1_conditions(small_modes, quartic_set):
    spec, sample_set = quartic_set
    report = check_theorem1_conditions(spec, small_modes, sample_set, schedule=(1, 2, 3))
    assert report.status == PASS
    assert report.items["c_plus"] <= 0
    assert report.items["delta_tail_strictly_decreasing"]
    assert report.items["c_eps0"] == 0.0


def test_theorem1_schedule_must_fit(small_modes, quartic_set):
    spec, sample_set = quartic_set
    with pytest.raises(ConfigurationError):
        check_theorem1_conditions(spec, small_modes, sample_set, schedule=(8, 16))


@pytest.mark.slow
def test_alpha_refinement_reports_both_levels():
    spec = WickSpec(QUARTIC, K=8)
    report = check_alpha_refinement(spec, RectangleDomain(), count=20000, seed=1)
    assert set(report.estimates) == {"K=8", "K=16"}
    assert all(np.isfinite(value) and value > 0 for value, _ in report.estimates.values())
