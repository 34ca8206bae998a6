import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
STATUSES = (PASS, FAIL, INCONCLUSIVE)


def aggregate_status(statuses: Iterable[str]) -> str:
    """Any fail fails the run; otherwise any inconclusive keeps it inconclusive."""
    statuses = list(statuses)
    if FAIL in statuses:
        return FAIL
    if INCONCLUSIVE in statuses:
        return INCONCLUSIVE
    return PASS


def statistical_status(value: float, stderr: float, sigma: float = 4.0, degenerate: bool = False, atol: float = 1e-12) -> str:
    if degenerate or not np.isfinite(value) or not np.isfinite(stderr):
        return INCONCLUSIVE
    return PASS if abs(value) <= sigma * stderr + atol else FAIL


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings "inf", "-inf" and "nan"."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2)


@dataclass(frozen=True)
class MonteCarloEstimate:
    name: str
    value: float
    stderr: float
    ess: Optional[float] = None
    degenerate: bool = False

    @property
    def status(self) -> str:
        if self.degenerate or not np.isfinite(self.value):
            return INCONCLUSIVE
        return PASS

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "value": self.value, "stderr": self.stderr, "ess": self.ess,
                "degenerate_weights": self.degenerate, "status": self.status}


@dataclass
class ResidualReport:
    """Monte-Carlo identity check: estimates and residuals as (value, stderr) pairs, judged at `sigma`."""
    name: str
    estimates: Dict[str, Tuple[float, float]]
    residuals: Dict[str, Tuple[float, float]]
    sigma: float = 4.0
    degenerate: bool = False
    ess: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def status(self) -> str:
        return aggregate_status(
            statistical_status(value, stderr, self.sigma, self.degenerate) for value, stderr in self.residuals.values()
        )

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "status": self.status,
            "sigma": self.sigma,
            "ess": self.ess,
            "degenerate_weights": self.degenerate,
            "estimates": {k: {"value": v, "stderr": s} for k, (v, s) in self.estimates.items()},
            "residuals": {k: {"value": v, "stderr": s} for k, (v, s) in self.residuals.items()},
            "details": self.details,
        }


@dataclass
class EstimateReport:
    r'''
    One inequality (or identity) evaluated at one or more times.

    margin = rhs - lhs.  An inequality row passes iff margin >= -budget; an equality row
    (kind="equality") passes iff |margin| <= budget.
    '''
    name: str
    lhs: np.ndarray
    rhs: np.ndarray
    times: Optional[np.ndarray] = None
    budget: Optional[np.ndarray] = None
    terms: Dict[str, Any] = field(default_factory=dict)
    kind: str = "inequality"
    label: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.lhs = np.atleast_1d(np.asarray(self.lhs, dtype=float))
        self.rhs = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        assert self.lhs.shape == self.rhs.shape, f"{self.name}: lhs {self.lhs.shape} and rhs {self.rhs.shape} differ"
        if self.times is not None:
            self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        budget = np.zeros_like(self.lhs) if self.budget is None else np.asarray(self.budget, dtype=float)
        self.budget = np.broadcast_to(budget, self.lhs.shape).copy()

    @property
    def margin(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def passed_rows(self) -> np.ndarray:
        if self.kind == "equality":
            return np.abs(self.margin) <= self.budget
        return self.margin >= -self.budget

    @property
    def passed(self) -> bool:
        return bool(np.all(self.passed_rows))

    @property
    def status(self) -> str:
        if not (np.all(np.isfinite(self.lhs)) and np.all(np.isfinite(self.rhs))):
            return INCONCLUSIVE
        return PASS if self.passed else FAIL

    def with_budget(self, budget) -> "EstimateReport":
        return replace(self, budget=budget, notes=list(self.notes))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "label": self.label,
            "status": self.status,
            "times": self.times,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "budget": self.budget,
            "passed": self.passed_rows,
            "terms": self.terms,
            "notes": self.notes,
        }

    def to_frame(self) -> pd.DataFrame:
        times = self.times if self.times is not None else np.full(self.lhs.shape, np.nan)
        return pd.DataFrame({
            "check": self.name,
            "t": times,
            "LHS": self.lhs,
            "RHS": self.rhs,
            "margin": self.margin,
            "budget": self.budget,
            "pass": self.passed_rows,
        })


@dataclass
class ConditionReport:
    """Report-only collection of computed conditions with an overall verdict."""
    name: str
    items: Dict[str, Any]
    status: str = PASS
    label: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "status": self.status, "label": self.label, "items": self.items, "notes": self.notes}
