import logging

import pandas as pd

from model.errors import ConfigurationError
from model.free_field import RectangleDomain, build_modes
from model.p_phi2 import check_alpha_refinement, check_ibp, check_theorem1_conditions, quadrature_stability, sample_nu
from model.utils import get_function, get_wick_spec
from runner.runner_base import BaseRunner
from validation.report import FAIL, PASS, ConditionReport

logger = logging.getLogger(__name__)

# samples used for the quadrature-stability probe of V
STABILITY_PROBE = 64


def parse_levels(text: str):
    try:
        return [int(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse truncation levels {text!r}", key="drift_schedule")


def get_runner(args):
    experiment_args, field_args, wick_args, _, _ = args

    domain = RectangleDomain(field_args.width, field_args.height)
    modes = build_modes(domain, field_args.K)
    spec = get_wick_spec(wick_args.coefficients, field_args.K, wick_args.alpha_idx, wick_args.delta_idx)
    sampling = dict(
        batch_size=field_args.batch_size,
        ess_floor=field_args.ess_floor,
        threads=experiment_args.threads,
        order=field_args.quadrature_order,
        progress=experiment_args.progress,
    )

    def evaluate(runner: BaseRunner):
        sample_set = sample_nu(spec, modes, field_args.num_samples, experiment_args.seed, **sampling)
        stability = quadrature_stability(sample_set.samples[:STABILITY_PROBE], spec, modes, field_args.quadrature_order)
        runner.add_report(ConditionReport("quadrature_stability", stability, status=PASS if stability["stable"] else FAIL))
        runner.summary.update({"ess": sample_set.ess, "ess_fraction": sample_set.ess_fraction, "K": modes.K,
                               "coefficients": spec.coefficients})

        if experiment_args.experiment == "ibp":
            f = get_function(wick_args.test_function, modes.K)
            runner.add_report(check_ibp(spec, modes, f, wick_args.direction, sample_set, field_args.sigma))
        else:
            report = runner.add_report(
                check_theorem1_conditions(spec, modes, sample_set, schedule=parse_levels(wick_args.drift_schedule))
            )
            runner.add_table("delta_tail", pd.DataFrame(report.items["delta_tail_L2"]))
            if wick_args.refine_K:
                runner.add_report(check_alpha_refinement(spec, domain, field_args.num_samples,
                                                         experiment_args.seed + 1, field_args.sigma, **sampling))

    return BaseRunner(args, evaluate)
