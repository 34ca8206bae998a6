import logging

from model.dirichlet_form import (
    dirichlet_energy,
    generator_limit_check,
    invariance_check,
    markov_checks,
    product_gaussian_sample_set,
    symmetry_check,
)
from model.utils import get_basis, get_function, get_problem
from runner.runner_base import BaseRunner

logger = logging.getLogger(__name__)


def get_runner(args):
    experiment_args, field_args, wick_args, grid_args, _ = args
    problem = get_problem(grid_args)
    f = get_function(wick_args.test_function, field_args.K)
    g = get_function(grid_args.markov_function, field_args.K)
    lambdas = get_basis(grid_args.basis, field_args.K).lambdas

    def evaluate(runner: BaseRunner):
        solution = problem.solve(progress=experiment_args.progress)
        runner.add_report(markov_checks(solution, tol=grid_args.markov_tol))
        bump = get_function("bump", problem.grid.d)
        runner.add_report(generator_limit_check(bump, problem.drift, problem.grid, rtol=grid_args.generator_rtol))

        sample_set = product_gaussian_sample_set(lambdas, field_args.num_samples, experiment_args.seed)
        runner.add_report(symmetry_check(f, g, sample_set, sigma=field_args.sigma))
        runner.add_report(invariance_check(f, sample_set, sigma=field_args.sigma))
        runner.add_report(dirichlet_energy(f, g, sample_set))
        runner.summary.update({"drift": problem.drift.name, "measure": problem.measure.name,
                               "final_time": problem.final_time, "samples": len(sample_set)})

    return BaseRunner(args, evaluate)
