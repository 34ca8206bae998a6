import logging

import numpy as np

from model.parabolic_solver import compute_c_minus, compute_c_plus, mehler_reference
from model.utils import get_problem
from runner.runner_base import BaseRunner
from validation.apriori_checks import (
    ParabolicProblem,
    check_eq34,
    check_identity33,
    check_lemma1,
    check_lemma2,
    check_lemma3,
    check_prop2,
    check_prop3,
    check_prop4,
    default_trial_fields,
    permutation_invariance,
    with_richardson_budget,
)
from validation.duhamel import lp_uniqueness_interval
from validation.report import FAIL, INCONCLUSIVE, PASS, ConditionReport

logger = logging.getLogger(__name__)

# relative change of the L^4 left-hand side allowed between h and h/2
L4_GRID_STABILITY = 0.02


def _prop2(problem: ParabolicProblem, sol):
    return check_prop2(sol, problem.drift, problem.initial, problem.weights)


def _prop3(problem: ParabolicProblem, sol):
    return check_prop3(sol, problem.drift, problem.initial, problem.measure, problem.weights)


def mehler_oracle_report(problem: ParabolicProblem, sol, times, rtol: float) -> ConditionReport:
    """Grid solution of the OU problem against the Mehler formula on the inner half-box."""
    mask = problem.grid.inner_box_mask(0.5)
    points = problem.grid.points()
    errors = {}
    for t in times:
        reference = mehler_reference(problem.initial, points, t)
        scale = float(np.max(np.abs(reference[mask])))
        errors[f"{t:g}"] = float(np.max(np.abs(sol.at(t)[mask] - reference[mask]))) / scale
    passed = all(e <= rtol for e in errors.values())
    return ConditionReport("mehler_oracle", {"relative_sup_error": errors, "rtol": rtol},
                           status=PASS if passed else FAIL)


def certification_report(*solutions) -> ConditionReport:
    leaks = [s.boundary_leak for s in solutions]
    certified = all(s.certified for s in solutions)
    return ConditionReport("box_truncation", {"boundary_leak": leaks, "certified": certified},
                           status=PASS if certified else INCONCLUSIVE,
                           notes=[n for s in solutions for n in s.notes])


def get_runner(args):
    experiment_args, _, _, grid_args, ladder_args = args
    problem = get_problem(grid_args)
    factor = experiment_args.budget_factor
    experiment = experiment_args.experiment

    def solve_pair(refine: bool):
        sol = problem.solve(progress=experiment_args.progress)
        fine = problem.refined().solve(progress=experiment_args.progress) if refine else None
        return sol, fine

    def budgeted(check, sol, fine, refined_problem=None):
        coarse = check(problem, sol)
        if fine is None:
            return coarse
        return with_richardson_budget(coarse, check(refined_problem or problem.refined(), fine), factor)

    def evaluate(runner: BaseRunner):
        runner.summary["c_plus"] = compute_c_plus(problem.drift, problem.grid, problem.weights)
        runner.summary["c_minus"] = compute_c_minus(problem.drift, problem.grid, problem.weights)

        if experiment == "eq34-scan":
            eps0, c, report = check_eq34(problem.measure.delta, problem.measure,
                                         default_trial_fields(problem.grid.d), problem.grid)
            runner.add_report(report)
            p_lo, p_hi = lp_uniqueness_interval(eps0)
            runner.summary.update({"eps0": eps0, "c_eps0": c, "p_lo": p_lo, "p_hi": p_hi})
            return

        refine = grid_args.refine or experiment == "lemma-suite"
        sol, fine = solve_pair(refine)
        runner.add_report(certification_report(*(s for s in (sol, fine) if s is not None)))
        refined = problem.refined() if refine else None

        if experiment == "gradient-bound":
            report = runner.add_report(budgeted(_prop2, sol, fine, refined))
            runner.add_estimate_table("estimates", [report])
            if grid_args.drift == "ou":
                runner.add_report(mehler_oracle_report(problem, sol, problem.times or [problem.final_time],
                                                       grid_args.oracle_rtol))
            if problem.grid.d > 1 and grid_args.check_permutations:
                runner.add_report(permutation_invariance(problem, {"gradient_bound": _prop2}))

        elif experiment == "energy-estimate":
            report = runner.add_report(budgeted(_prop3, sol, fine, refined))
            runner.add_estimate_table("estimates", [report])
            if problem.grid.d > 1 and grid_args.check_permutations:
                runner.add_report(permutation_invariance(problem, {"energy_estimate": _prop3}))

        elif experiment == "l4-estimate":
            if ladder_args.c_eps0 is None:
                eps0, c, scan = check_eq34(problem.measure.delta, problem.measure,
                                           default_trial_fields(problem.grid.d), problem.grid)
                runner.add_report(scan)
            else:
                eps0, c = ladder_args.eps0, ladder_args.c_eps0

            def prop4(p: ParabolicProblem, s):
                return check_prop4(s, p.drift, p.initial, p.measure, p.weights, eps0, c,
                                   constant=ladder_args.prop4_constant)

            report = runner.add_report(prop4(problem, sol))
            runner.summary["empirical_C"] = report.terms["empirical_C"]
            tables = [report]
            if fine is not None:
                fine_report = prop4(refined, fine)
                change = abs(fine_report.lhs[-1] - report.lhs[-1]) / max(abs(fine_report.lhs[-1]), 1e-300)
                runner.add_report(ConditionReport(
                    "l4_grid_stability", {"relative_change": change, "tolerance": L4_GRID_STABILITY},
                    status=PASS if change <= L4_GRID_STABILITY else FAIL,
                ))
                tables.append(fine_report)
            runner.add_estimate_table("estimates", tables)

        else:
            checks = {
                "lemma1": lambda p, s: check_lemma1(s, p.drift, p.measure),
                "lemma2": lambda p, s: check_lemma2(s, p.measure, p.drift),
                "lemma3": lambda p, s: check_lemma3(s, p.drift, p.initial, p.measure),
                "identity_lp_balance": lambda p, s: check_identity33(s, p.weights, grid_args.identity_p, p.drift),
            }
            reports = [runner.add_report(budgeted(check, sol, fine, refined)) for check in checks.values()]
            runner.add_estimate_table("estimates", reports)

    return BaseRunner(args, evaluate)
