import logging
from math import factorial

import numpy as np
import pandas as pd

from model.free_field import (
    FieldSample,
    RectangleDomain,
    build_modes,
    field_point_value,
    gram_matrix,
    h_alpha_norm,
    hs_partial_sums,
    local_variance,
    sample_free_field,
    spawn_generators,
)
from model.hermite_wick import hermite_coefficients, hermite_recurrence_coefficients, wick_powers
from runner.runner_base import BaseRunner
from validation.report import FAIL, PASS, ConditionReport, ResidualReport

logger = logging.getLogger(__name__)

HERMITE_EXACT_MAX = 20


def _mean_and_stderr(values):
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.shape[0]))


def draw_free_field(modes, count: int, seed: int, batch_size: int):
    """Free-field coefficients in seeded batches; batch b uses the b-th child stream of `seed`."""
    sizes = [min(batch_size, count - start) for start in range(0, count, batch_size)]
    generators = spawn_generators(seed, len(sizes))
    return np.concatenate([sample_free_field(modes, g, size).coeffs for g, size in zip(generators, sizes)])


def composite_vectors(K: int):
    """Fixed test sequences l for the covariance ||l||_{H_-1}^2."""
    uniform = np.ones(K) / np.sqrt(K)
    alternating = (-1.0) ** np.arange(K)
    first_two = np.zeros(K)
    first_two[: min(2, K)] = 1.0
    return {"uniform": uniform, "alternating": alternating, "first_two": first_two}


def covariance_report(modes, coeffs, sigma: float) -> ResidualReport:
    estimates, residuals = {}, {}
    for j, lam in enumerate(modes.eigenvalues):
        mean, stderr = _mean_and_stderr(coeffs[:, j] ** 2)
        estimates[f"mode_{j + 1}"] = (mean, stderr)
        residuals[f"mode_{j + 1}"] = (mean - 1.0 / lam, stderr)
    for name, l in composite_vectors(modes.K).items():
        mean, stderr = _mean_and_stderr((coeffs @ l) ** 2)
        expected = float(h_alpha_norm(l, modes, -1.0) ** 2)
        estimates[f"l_{name}"] = (mean, stderr)
        residuals[f"l_{name}"] = (mean - expected, stderr)
    return ResidualReport("free_field_covariance", estimates, residuals, sigma=sigma,
                          details={"count": coeffs.shape[0], "K": modes.K, "eigenvalues": modes.eigenvalues})


def hermite_exact_report(nmax: int = HERMITE_EXACT_MAX) -> ConditionReport:
    mismatches = [n for n in range(nmax + 1)
                  if tuple(hermite_coefficients(n).coeffs) != hermite_recurrence_coefficients(n)]
    return ConditionReport(
        "hermite_coefficients",
        {"max_degree": nmax, "mismatched_degrees": mismatches},
        status=PASS if not mismatches else FAIL,
    )


def wick_orthogonality_report(modes, coeffs, nmax: int, sigma: float) -> ResidualReport:
    r'''
    E[:g^n: :g^m:] = delta_{nm} n! c^n for the point value g of the field at the center of the
    rectangle, with c its variance.
    '''
    center = np.array([0.5 * modes.domain.L1, 0.5 * modes.domain.L2])
    c = float(local_variance(modes, center))
    g = field_point_value(FieldSample(coeffs), modes, center)
    powers = wick_powers(g, c, nmax)
    estimates, residuals = {}, {}
    for n in range(nmax + 1):
        for m in range(n, nmax + 1):
            mean, stderr = _mean_and_stderr(powers[n] * powers[m])
            expected = float(factorial(n) * c ** n) if n == m else 0.0
            estimates[f"{n},{m}"] = (mean, stderr)
            residuals[f"{n},{m}"] = (mean - expected, stderr)
    return ResidualReport("wick_orthogonality", estimates, residuals, sigma=sigma,
                          details={"variance": c, "point": center, "max_degree": nmax, "count": len(g)})


def get_runner(args):
    experiment_args, field_args, _, _, _ = args

    domain = RectangleDomain(field_args.width, field_args.height)
    modes = build_modes(domain, field_args.K)

    def evaluate(runner: BaseRunner):
        coeffs = draw_free_field(modes, field_args.num_samples, experiment_args.seed, field_args.batch_size)
        if experiment_args.experiment == "covariance":
            report = runner.add_report(covariance_report(modes, coeffs, field_args.sigma))
            gram = gram_matrix(modes, field_args.quadrature_order)
            runner.summary["gram_max_deviation"] = float(np.max(np.abs(gram - np.eye(modes.K))))
            runner.summary["hs_partial_sums"] = hs_partial_sums(modes, 0.5)
            rows = [{"mode": key, "estimate": v, "stderr": s, "residual": report.residuals[key][0]}
                    for key, (v, s) in report.estimates.items()]
            runner.add_table("covariance", pd.DataFrame(rows))
        else:
            runner.add_report(hermite_exact_report())
            runner.add_report(wick_orthogonality_report(modes, coeffs, field_args.wick_nmax, field_args.sigma))

    return BaseRunner(args, evaluate)
