import logging

import numpy as np

from model.utils import get_grid, get_initial, get_ladder
from runner.runner_base import BaseRunner
from validation.duhamel import (
    GAP_ATOL,
    convergence_study,
    cutoff_bounds,
    gap_monotonicity,
    lp_gap,
    lp_uniqueness_interval,
    parse_schedule,
    required_alpha_exponent,
    solve_reference,
    solve_rung,
    theorem4_exponent,
)
from validation.report import FAIL, PASS, ConditionReport

logger = logging.getLogger(__name__)

# lower end of the eps0 scan; the interval degenerates at 0
EPS0_SCAN_START = 0.01


def lp_interval_report(eps0: float, p: float):
    p_lo, p_hi = lp_uniqueness_interval(eps0)
    report = {"name": "lp_interval", "status": PASS, "eps0": eps0, "p_lo": p_lo, "p_hi": p_hi,
              "p": p, "required_alpha_exponent": required_alpha_exponent(p)}
    if 1.0 <= p < 2.0:
        report["alpha_exponent_below_2"] = theorem4_exponent(p)
    return report


def interval_monotonicity(points: int) -> ConditionReport:
    """eps0 <= eps0' must give nested intervals along a grid of eps0 values."""
    grid = np.linspace(EPS0_SCAN_START, 1.0, points)
    intervals = [lp_uniqueness_interval(float(e)) for e in grid]
    nested = all(lo1 <= lo0 and hi0 <= hi1 for (lo0, hi0), (lo1, hi1) in zip(intervals, intervals[1:]))
    rows = [{"eps0": float(e), "p_lo": lo, "p_hi": hi} for e, (lo, hi) in zip(grid, intervals)]
    return ConditionReport("lp_interval_monotonicity", {"scan": rows}, status=PASS if nested else FAIL)


def get_runner(args):
    experiment_args, _, _, grid_args, ladder_args = args
    experiment = experiment_args.experiment

    def evaluate_interval(runner: BaseRunner):
        interval = lp_interval_report(ladder_args.eps0, ladder_args.lp_p)
        report = runner.add_report(interval, key=interval["name"])
        runner.summary.update({"p_lo": report["p_lo"], "p_hi": report["p_hi"]})
        runner.add_report(interval_monotonicity(ladder_args.scan_points))

    if experiment == "lp-interval":
        return BaseRunner(args, evaluate_interval)

    norm = "L2" if experiment == "duhamel-l2" else "L1"
    ladder = get_ladder(ladder_args.ladder, grid_args.dimension)
    if ladder_args.gamma is not None:
        ladder.gamma = ladder_args.gamma
    grid = get_grid(grid_args)
    f = get_initial(grid_args.initial, grid_args.dimension)
    t = grid_args.final_time
    schedule = parse_schedule(ladder_args.schedule)

    def study(on_grid):
        reference = solve_reference(ladder, f, t, on_grid, grid_args.n_snapshots)
        table = convergence_study(ladder, f, t, schedule, on_grid, n_snapshots=grid_args.n_snapshots,
                                  threads=experiment_args.threads, progress=experiment_args.progress,
                                  reference=reference)
        return reference, table[table["norm"] == norm].reset_index(drop=True)

    def evaluate(runner: BaseRunner):
        reference, table = study(grid)
        if grid_args.refine:
            _, fine = study(grid.refine())
            change = np.abs(table["LHS"].to_numpy() - fine["LHS"].to_numpy())
            table = fine.assign(budget=experiment_args.budget_factor * change / 3.0 + GAP_ATOL, coarse_LHS=table["LHS"])
            table["pass"] = table["margin"] >= -table["budget"]

        failing = table[~table["pass"]]
        runner.add_report(ConditionReport(
            f"duhamel_{norm.lower()}_bound",
            {"rungs": len(schedule), "rows": len(table), "failing_rows": failing.to_dict("records"),
             "min_margin": float(table["margin"].min()), "certified_reference": reference.certified},
            status=PASS if failing.empty else FAIL,
        ))
        if ladder.nested:
            monotone = gap_monotonicity(table, tol=float(table["budget"].max()))
            runner.add_report(ConditionReport("gap_monotonicity", monotone,
                                              status=PASS if all(monotone.values()) else FAIL))
        final = table[table["t"] == table["t"].max()]
        runner.summary.update({
            "ladder": ladder.name,
            "schedule": schedule,
            "gamma": ladder.resolved_gamma(),
            "final_gaps": {f"{n}:{m}": gap for n, m, gap in zip(final["n"], final["m"], final["LHS"])},
            "cutoff": cutoff_bounds([grid.radius], grid.points()),
        })
        n, m = schedule[-1]
        last = solve_rung(ladder, n, m, f, t, grid, times=[t], n_snapshots=grid_args.n_snapshots)
        runner.summary["last_rung_lp_gaps"] = lp_gap(reference, last, ladder.measure, t)
        runner.add_table("gaps", table)

    return BaseRunner(args, evaluate)
