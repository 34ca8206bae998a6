import numpy as np
import pandas as pd
import pytest

from model.errors import DimensionError, DomainError
from model.free_field import (
    FieldSample,
    RectangleDomain,
    build_modes,
    export_samples_csv,
    field_point_value,
    gram_matrix,
    h_alpha_norm,
    hs_partial_sums,
    local_variance,
    make_mode,
    rigging_admissible,
    sample_free_field,
    spawn_generators,
)


def test_first_modes_of_unit_square(unit_modes):
    assert unit_modes[0].m == 0 and unit_modes[0].n == 0
    assert unit_modes.eigenvalues[0] == pytest.approx(1.0)
    # (1, 0) and (0, 1) are degenerate; ties break on (m, n)
    assert (unit_modes[1].m, unit_modes[1].n) == (0, 1)
    assert (unit_modes[2].m, unit_modes[2].n) == (1, 0)
    np.testing.assert_allclose(unit_modes.eigenvalues[1:3], np.pi ** 2 + 1.0)
    assert np.all(np.diff(unit_modes.eigenvalues) >= 0)


def test_rectangle_eigenvalue_and_normalization():
    domain = RectangleDomain(2.0, 1.0)
    mode = make_mode(domain, 1, 1)
    assert mode.eigenvalue == pytest.approx(np.pi ** 2 / 4 + np.pi ** 2 + 1)
    assert mode.norm_const == pytest.approx(np.sqrt(4.0 / 2.0))


def test_gram_matrix_is_identity():
    modes = build_modes(RectangleDomain(1.0, 1.5), 16)
    np.testing.assert_allclose(gram_matrix(modes), np.eye(16), atol=1e-6)


def test_mode_gradient_matches_finite_differences(unit_modes):
    mode = unit_modes[4]
    x, y, eps = 0.31, 0.62, 1e-6
    grad = mode.gradient(x, y)
    assert grad[0] == pytest.approx((mode(x + eps, y) - mode(x - eps, y)) / (2 * eps), rel=1e-6, abs=1e-6)
    assert grad[1] == pytest.approx((mode(x, y + eps) - mode(x, y - eps)) / (2 * eps), rel=1e-6, abs=1e-6)


def test_seeded_sampling_is_reproducible(unit_modes):
    a = sample_free_field(unit_modes, 7, count=10)
    b = sample_free_field(unit_modes, 7, count=10)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    c = sample_free_field(unit_modes, 8, count=10)
    assert not np.array_equal(a.coeffs, c.coeffs)


def test_spawned_streams_are_distinct():
    first, second = spawn_generators(0, 2)
    assert first.standard_normal() != second.standard_normal()


def test_per_mode_variance(unit_modes):
    count = 100000
    z = sample_free_field(unit_modes, spawn_generators(3, 1)[0], count).coeffs
    second = z ** 2
    mean = second.mean(axis=0)
    stderr = second.std(axis=0, ddof=1) / np.sqrt(count)
    assert np.all(np.abs(mean - 1.0 / unit_modes.eigenvalues) <= 4.5 * stderr)


def test_h_alpha_norm(unit_modes):
    l = np.zeros(len(unit_modes))
    l[1] = 2.0
    assert h_alpha_norm(l, unit_modes, -1.0) == pytest.approx(2.0 / np.sqrt(np.pi ** 2 + 1))
    with pytest.raises(DimensionError):
        h_alpha_norm(np.ones(3), unit_modes, -1.0)


def test_composite_vector_variance(unit_modes):
    count = 100000
    z = sample_free_field(unit_modes, 11, count).coeffs
    l = np.linspace(1.0, -1.0, len(unit_modes))
    pairing = z @ l
    # E <z, l>^2 = ||l||^2_{H_-1}
    expected = h_alpha_norm(l, unit_modes, -1.0) ** 2
    stderr = (pairing ** 2).std(ddof=1) / np.sqrt(count)
    assert abs((pairing ** 2).mean() - expected) <= 4.5 * stderr


def test_point_values_and_local_variance(unit_modes):
    sample = FieldSample(np.ones(len(unit_modes)))
    value = field_point_value(sample, unit_modes, [0.0, 0.0])
    expected = sum(mode(0.0, 0.0) for mode in unit_modes)
    assert value == pytest.approx(expected)
    c = local_variance(unit_modes, [0.5, 0.5])
    assert c == pytest.approx(sum(mode(0.5, 0.5) ** 2 / mode.eigenvalue for mode in unit_modes))
    assert c > 0


def test_points_outside_the_rectangle(unit_modes):
    sample = FieldSample(np.zeros(len(unit_modes)))
    with pytest.raises(DomainError):
        field_point_value(sample, unit_modes, [1.5, 0.2])
    with pytest.raises(DomainError):
        local_variance(unit_modes, [-0.1, 0.2])


def test_pairing_mismatch(unit_modes):
    with pytest.raises(DimensionError):
        field_point_value(FieldSample(np.zeros(3)), unit_modes, [0.2, 0.2])
    with pytest.raises(DimensionError):
        FieldSample(np.zeros((2, 2, 2)))
    with pytest.raises(DimensionError):
        build_modes(RectangleDomain(), 0)
    with pytest.raises(DomainError):
        RectangleDomain(0.0, 1.0)


def test_batch_indexing(unit_modes):
    sample = sample_free_field(unit_modes, 1, count=5)
    assert len(sample) == 5 and sample.is_batch
    assert sample[0].K == len(unit_modes)
    assert len(sample[1:3]) == 2


@pytest.mark.parametrize("alpha,delta,admissible", [(1.0, 1.0, True), (0.5, 1.0, False), (0.6, 1.0, True), (0.0, 4.0, False)])
def test_rigging_admissible(alpha, delta, admissible):
    assert rigging_admissible(alpha, delta) is admissible


def test_hs_partial_sums_monotone_and_bounded():
    modes = build_modes(RectangleDomain(), 64)
    sums = hs_partial_sums(modes, 1.0)
    assert np.all(np.diff(sums) > 0)
    assert sums[-1] < 2.0


def test_export_samples_csv(tmp_path, unit_modes):
    sample = sample_free_field(unit_modes, 0, count=3)
    path = tmp_path / "samples.csv"
    export_samples_csv(sample, str(path))
    frame = pd.read_csv(path)
    assert list(frame.columns) == [f"z_{j}" for j in range(1, len(unit_modes) + 1)]
    assert frame.shape == (3, len(unit_modes))
