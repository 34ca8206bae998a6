import dataclasses
import datetime
import logging
import os
import platform
import sys
from collections import OrderedDict
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from validation.report import FAIL, INCONCLUSIVE, PASS, EstimateReport, aggregate_status, dumps, to_jsonable

logger = logging.getLogger(__name__)

_default_log_level = logging.INFO
logger.setLevel(_default_log_level)

EXIT_CODES = {PASS: 0, FAIL: 1, INCONCLUSIVE: 2}
EXIT_CONFIGURATION = 3
EXIT_NUMERICAL_ABORT = 4


def _scalar_metrics(report_dict: Dict[str, Any]) -> "OrderedDict[str, Any]":
    """The one-line-per-key view of a report used in the log block."""
    metrics = OrderedDict(status=report_dict.get("status"))
    for key in ("label", "ess", "degenerate_weights", "value", "stderr"):
        if report_dict.get(key) is not None:
            metrics[key] = report_dict[key]
    if "margin" in report_dict:
        margin = np.asarray(report_dict["margin"], dtype=float)
        if margin.size:
            metrics["min_margin"] = float(np.min(margin))
            metrics["rows_passed"] = f"{int(np.sum(report_dict['passed']))}/{margin.size}"
    for key, (value, stderr) in ((k, (v["value"], v["stderr"])) for k, v in report_dict.get("residuals", {}).items()):
        metrics[f"residual_{key}"] = f"{value:.4e} +- {stderr:.2e}"
    return metrics


class BaseRunner:
    r'''
    Collects the reports of one experiment, logs them as metrics blocks and writes

        <out>/<experiment>.json             report body, deterministic for a fixed config and seed
        <out>/<experiment>_manifest.json    resolved config, seed, status, timestamps and versions
        <out>/<experiment>_<table>.csv      optional long tables
    '''

    def __init__(self, args, evaluate_fn: Callable[["BaseRunner"], None], test_key: str = "status"):
        self.args = args
        self.experiment_args = args[0]
        self.experiment = self.experiment_args.experiment
        self.output_dir = self.experiment_args.out
        self.budget_factor = self.experiment_args.budget_factor
        self.evaluate_fn = evaluate_fn
        self.test_key = test_key
        self.reports: "OrderedDict[str, Any]" = OrderedDict()
        self.tables: "OrderedDict[str, pd.DataFrame]" = OrderedDict()
        self.summary: "OrderedDict[str, Any]" = OrderedDict()
        self.started = None
        self.finished = None

    def add_report(self, report, key: Optional[str] = None):
        key = key or report.name
        if key in self.reports:
            raise KeyError(f"duplicate report {key} in experiment {self.experiment}")
        self.reports[key] = report
        self.log_metrics(key, _scalar_metrics(to_jsonable(report)))
        return report

    def add_reports(self, reports: Iterable):
        for report in reports:
            self.add_report(report)

    def add_table(self, name: str, table: pd.DataFrame):
        self.tables[name] = table

    def add_estimate_table(self, name: str, reports: List[EstimateReport]):
        self.add_table(name, pd.concat([r.to_frame() for r in reports], ignore_index=True))

    @property
    def status(self) -> str:
        return aggregate_status(
            r.status if hasattr(r, "status") else r.get("status", PASS) for r in self.reports.values()
        )

    def log_metrics(self, split: str, metrics: Dict[str, Any]):
        logger.info(f"***** {split} metrics *****")
        width = max((len(str(k)) for k in metrics), default=0)
        for key, value in metrics.items():
            logger.info(f"  {key: <{width}} = {value}")

    def body(self) -> Dict[str, Any]:
        return {
            "experiment": self.experiment,
            "seed": self.experiment_args.seed,
            "status": self.status,
            "summary": self.summary,
            "reports": self.reports,
        }

    def manifest(self, status: Optional[str] = None, exit_code: Optional[int] = None,
                 diagnostic: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        config = OrderedDict()
        for group in self.args:
            config[type(group).__name__] = dataclasses.asdict(group)
        return {
            "experiment": self.experiment,
            "seed": self.experiment_args.seed,
            "status": status or self.status,
            "exit_code": EXIT_CODES.get(status or self.status) if exit_code is None else exit_code,
            "config": config,
            "argv": sys.argv,
            "started": self.started,
            "finished": self.finished,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "outputs": self.output_files(),
            "diagnostic": diagnostic,
        }

    def output_files(self) -> List[str]:
        files = [f"{self.experiment}.json", f"{self.experiment}_manifest.json"]
        if self.experiment_args.write_csv:
            files += [f"{self.experiment}_{name}.csv" for name in self.tables]
        return files

    def save_metrics(self):
        os.makedirs(self.output_dir, exist_ok=True)
        path = os.path.join(self.output_dir, f"{self.experiment}.json")
        with open(path, "w") as f:
            f.write(dumps(self.body()) + "\n")
        if self.experiment_args.write_csv:
            for name, table in self.tables.items():
                table.to_csv(os.path.join(self.output_dir, f"{self.experiment}_{name}.csv"), index=False)
        logger.info(f"Saved report to {path}")

    def save_manifest(self, **kwargs):
        os.makedirs(self.output_dir, exist_ok=True)
        path = os.path.join(self.output_dir, f"{self.experiment}_manifest.json")
        with open(path, "w") as f:
            f.write(dumps(self.manifest(**kwargs)) + "\n")

    def evaluate(self) -> str:
        logger.info(f"*** Evaluate {self.experiment} ***")
        self.started = datetime.datetime.now().isoformat(timespec="seconds")
        self.evaluate_fn(self)
        self.finished = datetime.datetime.now().isoformat(timespec="seconds")
        status = self.status
        self.log_metrics(self.experiment, OrderedDict([("status", status), ("reports", len(self.reports))]))
        self.save_metrics()
        self.save_manifest()
        return status
