import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid
from tqdm.auto import tqdm

from model.errors import ConfigurationError, DomainError
from model.parabolic_solver import (
    MAX_DIMENSION,
    DriftFieldFD,
    Grid,
    GridSolution,
    basis_weights,
    combine,
    linear_drift,
    solve_cauchy,
    zero_drift,
)
from validation.apriori_checks import ReferenceMeasureFD, _minus_norm, _plus_norm, gaussian_measure
from validation.report import EstimateReport

logger = logging.getLogger(__name__)

GAP_ATOL = 1e-12


def truncate_drift(b: DriftFieldFD, k: int, name: Optional[str] = None) -> DriftFieldFD:
    """Keep the first k components of a coordinatewise drift and zero the rest."""

    def drift(x):
        values = np.array(b.drift(x), dtype=float)
        values[k:] = 0.0
        return values

    def jacobian(x):
        values = np.array(b.jacobian(x), dtype=float)
        values[:, k:] = 0.0
        return values

    return DriftFieldFD(name or f"{b.name}|{k}", drift=drift, jacobian=jacobian)


def tanh_drift(d: int, strength: float) -> DriftFieldFD:
    def drift(x):
        return -strength * np.tanh(np.asarray(x, dtype=float))

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        values = np.zeros((d, d) + x.shape[1:])
        for j in range(d):
            values[j, j] = -strength / np.cosh(x[j]) ** 2
        return values

    return DriftFieldFD(f"tanh[{strength:g}]", drift=drift, jacobian=jacobian)


@dataclass
class ApproximationLadder:
    r'''
    Target drift beta = alpha + delta on R^D together with the approximating families alpha^n, delta^m.

    a_n and N_m are the numbers of coordinates alpha^n and delta^m depend on; the rung (n, m) lives
    in d_{n,m} = max(m, a_n, N_m) coordinates.  `gamma` is the lower bound of the reference generator.
    '''
    name: str
    D: int
    measure: ReferenceMeasureFD
    alpha_family: Callable[[int], DriftFieldFD]
    delta_family: Callable[[int], DriftFieldFD]
    a_n: Callable[[int], int]
    N_m: Callable[[int], int]
    weights: np.ndarray
    gamma: Optional[float] = None
    nested: bool = True
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.D <= MAX_DIMENSION:
            raise ConfigurationError(f"ambient dimension must be in 1..{MAX_DIMENSION}, got {self.D}", key="dimension")
        self.weights = basis_weights(self.weights, self.D)

    @property
    def target(self) -> DriftFieldFD:
        return self.measure.beta

    def effective_dimension(self, n: int, m: int) -> int:
        return max(m, self.a_n(n), self.N_m(m))

    def resolved_gamma(self) -> float:
        if self.gamma is None:
            logger.warning(f"No lower bound gamma given for ladder {self.name}; using gamma = 0")
            return 0.0
        return float(self.gamma)


def linear_gaussian_ladder(D: int = 2, kappa: Optional[Sequence[float]] = None, weights=None) -> ApproximationLadder:
    """alpha = 0 and delta = -diag(kappa) x; delta^m keeps the first m coordinates."""
    kappa = np.arange(1.0, D + 1.0) if kappa is None else np.asarray(kappa, dtype=float)
    measure = gaussian_measure(1.0 / kappa, split="delta")
    delta = linear_drift(np.diag(-kappa), name="delta")
    return ApproximationLadder(
        name="linear-gaussian", D=D, measure=measure,
        alpha_family=lambda n: zero_drift(),
        delta_family=lambda m: truncate_drift(delta, m, name=f"delta^{m}"),
        a_n=lambda n: 0, N_m=lambda m: m,
        weights=kappa if weights is None else weights,
        gamma=0.0,
    )


def tanh_ladder(D: int = 2, strength: float = 0.5, weights=None) -> ApproximationLadder:
    r'''
    nu with density exp(-|x|^2/2 - strength sum_j log cosh x_j): delta = -x and alpha = -strength tanh(x).
    alpha^n and delta^m keep the first n and m coordinates.
    '''
    alpha = tanh_drift(D, strength)
    delta = linear_drift(-np.eye(D), name="delta")
    measure = ReferenceMeasureFD(
        name=f"tanh[{strength:g}]",
        d=D,
        log_density=lambda x: -np.sum(0.5 * np.asarray(x) ** 2 + strength * np.log(np.cosh(x)), axis=0),
        beta=combine(alpha, delta, name="tanh-target"),
        alpha=alpha,
        delta=delta,
    )
    return ApproximationLadder(
        name="tanh", D=D, measure=measure,
        alpha_family=lambda n: truncate_drift(alpha, n, name=f"alpha^{n}"),
        delta_family=lambda m: truncate_drift(delta, m, name=f"delta^{m}"),
        a_n=lambda n: n, N_m=lambda m: m,
        weights=np.arange(1.0, D + 1.0) if weights is None else weights,
        gamma=0.0,
    )


def exact_ladder(D: int = 2, weights=None) -> ApproximationLadder:
    """Every rung carries the target drift itself."""
    base = linear_gaussian_ladder(D, weights=weights)
    base.name = "exact"
    base.delta_family = lambda m: base.measure.delta
    base.N_m = lambda m: D
    base.nested = False
    return base


def build_projected_drift(ladder: ApproximationLadder, n: int, m: int) -> DriftFieldFD:
    """b^{n,m} = P_d (alpha^n + delta^m) with d = d_{n,m}, as a drift on the ambient R^D."""
    if n < 0 or m < 0:
        raise ConfigurationError(f"ladder indices must be non-negative, got ({n}, {m})", key="schedule")
    d = ladder.effective_dimension(n, m)
    if d > ladder.D:
        raise ConfigurationError(f"rung ({n}, {m}) needs {d} coordinates; the grid has {ladder.D} (limit {MAX_DIMENSION})",
                                 key="schedule")
    alpha, delta = ladder.alpha_family(n), ladder.delta_family(m)
    projected = truncate_drift(combine(alpha, delta), d, name=f"b^{{{n},{m}}}")
    projected.alpha_part, projected.delta_part = alpha, delta
    return projected


def smooth_cutoff(x, k: float):
    r'''
    C^infinity plateau in |x|_0: 1 on |x| <= k, 0 on |x| >= k + 1, with sup |grad chi| = 2.
    `x` has the coordinate axis first.
    '''
    r = np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=0))
    return _step(k + 1.0 - r)


def smooth_cutoff_gradient(x, k: float):
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x ** 2, axis=0))
    s = k + 1.0 - r
    with np.errstate(divide="ignore", invalid="ignore"):
        direction = np.where(r > 0, x / r, 0.0)
    return -_step_derivative(s) * direction


def _psi(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def _step(s):
    """Smooth transition 0 -> 1 on [0, 1]."""
    a, b = _psi(s), _psi(1.0 - np.asarray(s, dtype=float))
    return a / (a + b)


def _step_derivative(s):
    s = np.asarray(s, dtype=float)
    a, b = _psi(s), _psi(1.0 - s)
    safe = np.where((s > 0) & (s < 1), s, 0.5)
    da = np.where((s > 0) & (s < 1), a / safe ** 2, 0.0)
    db = np.where((s > 0) & (s < 1), b / (1.0 - safe) ** 2, 0.0)
    return (da * b + a * db) / (a + b) ** 2


def cutoff_bounds(ks: Sequence[float], points) -> Dict[str, float]:
    """sup over the family of ||chi_k||_inf and ||grad chi_k||_inf at `points`."""
    sup_chi = max(float(np.max(np.abs(smooth_cutoff(points, k)))) for k in ks)
    sup_grad = max(float(np.max(np.sqrt(np.sum(smooth_cutoff_gradient(points, k) ** 2, axis=0)))) for k in ks)
    return {"sup_chi": sup_chi, "sup_grad_chi": sup_grad}


def lp_uniqueness_interval(eps0: float) -> Tuple[float, float]:
    """(1 + 1/(1 + sqrt eps0), 1 + 1/(1 - sqrt eps0)), open at both ends; p_hi is inf at eps0 = 1."""
    if not 0.0 < eps0 <= 1.0:
        raise DomainError(f"eps0 must lie in (0, 1], got {eps0}")
    root = np.sqrt(eps0)
    p_lo = 1.0 + 1.0 / (1.0 + root)
    p_hi = np.inf if eps0 == 1.0 else 1.0 + 1.0 / (1.0 - root)
    return float(p_lo), float(p_hi)


def required_alpha_exponent(p: float) -> float:
    """|alpha|_0 must lie in L^{2p}(nu) for L^p uniqueness inside the interval."""
    if p <= 1.0:
        raise DomainError(f"p must exceed 1, got {p}")
    return 2.0 * p


def theorem4_exponent(p: float) -> float:
    """Integrability exponent 2p/(2-p) of |alpha|_0 for L^p uniqueness with 1 <= p < 2."""
    if not 1.0 <= p < 2.0:
        raise DomainError(f"p must lie in [1, 2), got {p}")
    return 2.0 * p / (2.0 - p)


def solve_rung(ladder: ApproximationLadder, n: int, m: int, f, t: float, grid: Grid,
               times: Optional[Sequence[float]] = None, n_snapshots: int = 32) -> GridSolution:
    return solve_cauchy(build_projected_drift(ladder, n, m), f, t, grid, times=times, n_snapshots=n_snapshots,
                        leak_weights=ladder.measure.grid_weights(grid))


def solve_reference(ladder: ApproximationLadder, f, t: float, grid: Grid, n_snapshots: int = 32) -> GridSolution:
    """The reference semigroup: the same grid with the exact target drift."""
    return solve_cauchy(ladder.target, f, t, grid, n_snapshots=n_snapshots, leak_weights=ladder.measure.grid_weights(grid))


def _gap(ladder, n, m, f, t, reference, measure, approximate, p_diff, p_alpha, p_grad, p_delta, name):
    measure = measure or ladder.measure
    grid = reference.grid
    keep = reference.times <= t + 1e-12
    times = reference.times[keep]
    if approximate is None:
        approximate = solve_rung(ladder, n, m, f, t, grid, times=times, n_snapshots=1)
    approx_u = np.stack([approximate.at(s) for s in times])
    approx_grad = np.stack([approximate.grad[approximate.index(s)] for s in times])

    lhs = measure.lp_norm(reference.u[keep] - approx_u, grid, p_diff)

    points = grid.points()
    mu = ladder.weights
    alpha_err = measure.lp_norm(np.sqrt(np.sum((ladder.alpha_family(n)(points) - measure.alpha(points)) ** 2, axis=0)),
                                grid, p_alpha)
    delta_err = measure.lp_norm(_minus_norm(ladder.delta_family(m)(points) - measure.delta(points), mu), grid, p_delta)
    grad_zero = measure.lp_norm(np.sqrt(np.sum(approx_grad ** 2, axis=1)), grid, p_grad)
    mask = grid.interior_mask(2)
    grad_plus = np.array([np.max(v[mask]) for v in _plus_norm(approx_grad, mu, axis=1)])
    gamma = ladder.resolved_gamma()
    alpha_term = alpha_err * cumulative_trapezoid(grad_zero, times, initial=0.0)
    delta_term = delta_err * cumulative_trapezoid(grad_plus, times, initial=0.0)
    rhs = np.exp(gamma * times) * (alpha_term + delta_term)
    return EstimateReport(
        f"{name}[n={n},m={m}]", lhs, rhs, times=times,
        terms={"n": n, "m": m, "d_nm": ladder.effective_dimension(n, m), "gamma": gamma,
               "alpha_error": alpha_err, "delta_error": delta_err, "alpha_term": alpha_term, "delta_term": delta_term,
               "cutoff_active": not reference.certified},
        budget=GAP_ATOL,
        notes=[] if reference.certified else ["reference solution reaches the box boundary; the cutoff is not inactive"],
    )


def duhamel_gap(ladder: ApproximationLadder, n: int, m: int, f, t: float, reference: GridSolution,
                measure: Optional[ReferenceMeasureFD] = None, approximate: Optional[GridSolution] = None) -> EstimateReport:
    r'''
    L^2(nu) distance between the reference semigroup and the rung (n, m) against

        e^{t gamma} [ || |alpha^n - alpha|_0 ||_4  int_0^t || |grad u|_0 ||_4 ds
                    + || |delta^m - delta|_- ||_2  int_0^t || |grad u|_+ ||_inf ds ]

    with u the rung solution, at every reference snapshot up to t.
    '''
    return _gap(ladder, n, m, f, t, reference, measure, approximate, 2.0, 4.0, 4.0, 2.0, "duhamel_l2")


def duhamel_gap_l1(ladder: ApproximationLadder, n: int, m: int, f, t: float, reference: GridSolution,
                   measure: Optional[ReferenceMeasureFD] = None, approximate: Optional[GridSolution] = None) -> EstimateReport:
    """The L^1(nu) version, pairing || |alpha^n - alpha|_0 ||_2 with || |grad u|_0 ||_2 and the delta error in L^1."""
    return _gap(ladder, n, m, f, t, reference, measure, approximate, 1.0, 2.0, 2.0, 1.0, "duhamel_l1")


def lp_gap(reference: GridSolution, approximate: GridSolution, measure: ReferenceMeasureFD, t: float,
           ps: Sequence[float] = (1.0, 2.0, 4.0, np.inf)) -> Dict[str, float]:
    difference = reference.at(t) - approximate.at(t)
    return {f"L{p:g}": float(measure.lp_norm(difference, reference.grid, p)) for p in ps}


def validate_schedule(schedule: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
    """Rungs sweep m upwards at fixed n before n advances."""
    schedule = [(int(n), int(m)) for n, m in schedule]
    if not schedule:
        raise ConfigurationError("empty ladder schedule", key="schedule")
    for (n0, m0), (n1, m1) in zip(schedule, schedule[1:]):
        if n1 < n0 or (n1 == n0 and m1 <= m0):
            raise ConfigurationError(f"schedule must sweep m at fixed n, then advance n; got ({n0},{m0}) -> ({n1},{m1})",
                                     key="schedule")
    return schedule


def parse_schedule(text: str) -> List[Tuple[int, int]]:
    """'0:1,0:2,1:2' -> [(0, 1), (0, 2), (1, 2)]"""
    try:
        pairs = [tuple(int(v) for v in item.split(":")) for item in text.replace(";", ",").split(",") if item.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse schedule {text!r}; expected n:m pairs", key="schedule")
    if any(len(p) != 2 for p in pairs):
        raise ConfigurationError(f"cannot parse schedule {text!r}; expected n:m pairs", key="schedule")
    return validate_schedule(pairs)


def convergence_study(ladder: ApproximationLadder, f, t: float, schedule: Sequence[Tuple[int, int]], grid: Grid,
                      n_snapshots: int = 32, threads: int = 1, progress: bool = False,
                      reference: Optional[GridSolution] = None) -> pd.DataFrame:
    """Long table of L^2 and L^1 gaps, one row per (n, m, t, norm)."""
    schedule = validate_schedule(schedule)
    if reference is None:
        reference = solve_reference(ladder, f, t, grid, n_snapshots)
    times = reference.times[reference.times <= t + 1e-12]

    def run(rung):
        n, m = rung
        # march through exactly the reference stops
        approximate = solve_rung(ladder, n, m, f, t, grid, times=times, n_snapshots=1)
        return [duhamel_gap(ladder, n, m, f, t, reference, approximate=approximate),
                duhamel_gap_l1(ladder, n, m, f, t, reference, approximate=approximate)]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(tqdm(pool.map(run, schedule), total=len(schedule), desc=f"ladder[{ladder.name}]",
                            disable=not progress))
    frames = []
    for (n, m), reports in zip(schedule, results):
        for norm, report in zip(("L2", "L1"), reports):
            frame = report.to_frame().drop(columns=["check"])
            frame.insert(0, "norm", norm)
            frame.insert(0, "m", m)
            frame.insert(0, "n", n)
            frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def gap_monotonicity(table: pd.DataFrame, tol: float = 0.0) -> Dict[str, bool]:
    """Per norm and n: is the final-time gap non-increasing in m, up to `tol`?"""
    final = table[table["t"] == table["t"].max()]
    result = {}
    for (norm, n), group in final.groupby(["norm", "n"]):
        gaps = group.sort_values("m")["LHS"].to_numpy()
        result[f"{norm}[n={n}]"] = bool(np.all(np.diff(gaps) <= tol))
    return result
