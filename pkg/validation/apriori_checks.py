import itertools
import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from model.errors import ConfigurationError, DimensionError
from model.parabolic_solver import (
    DEFAULT_SNAPSHOTS,
    DriftFieldFD,
    Grid,
    GridSolution,
    Weights,
    basis_weights,
    combine,
    compute_c_plus,
    grid_gradient,
    linear_drift,
    solve_cauchy,
    zero_drift,
)
from validation.report import FAIL, PASS, ConditionReport, EstimateReport

logger = logging.getLogger(__name__)

ZERO_C_PLUS = 1e-12
NORMALIZATION_TOL = 1e-6
# the empirical constant makes one row tight up to rounding
ROUNDING_RTOL = 1e-12


@dataclass
class ReferenceMeasureFD:
    r'''
    A measure nu on R^d with density rho (up to normalization) and log-derivative
    beta = grad log rho, split as beta = alpha + delta.  Integrals against nu are weighted
    trapezoid sums on the solver grid.
    '''
    name: str
    d: int
    log_density: Callable[[np.ndarray], np.ndarray]
    beta: DriftFieldFD
    alpha: DriftFieldFD
    delta: DriftFieldFD
    normalizer: Optional[float] = None

    def grid_weights(self, grid: Grid) -> np.ndarray:
        self._check_grid(grid)
        log_rho = self.log_density(grid.points())
        weights = np.exp(log_rho - np.max(log_rho)) * grid.cell_weights()
        return weights / weights.sum()

    def box_mass(self, grid: Grid) -> float:
        self._check_grid(grid)
        return float(np.sum(np.exp(self.log_density(grid.points())) * grid.cell_weights()))

    def check_normalization(self, grid: Grid, tol: float = NORMALIZATION_TOL) -> Dict[str, float]:
        """Box quadrature of rho against the closed-form normalizer, when one is known."""
        mass = self.box_mass(grid)
        if self.normalizer is None:
            return {"box_mass": mass, "relative_error": float("nan"), "passed": True}
        error = abs(mass / self.normalizer - 1.0)
        return {"box_mass": mass, "relative_error": error, "passed": bool(error <= tol)}

    def check_log_derivative(self, points, step: float = 1e-5) -> float:
        """Max deviation of beta from central differences of log rho, and of alpha + delta from beta."""
        points = np.asarray(points, dtype=float)
        beta = self.beta(points)
        error = float(np.max(np.abs(self.alpha(points) + self.delta(points) - beta)))
        for i in range(self.d):
            shift = np.zeros_like(points)
            shift[i] = step
            numeric = (self.log_density(points + shift) - self.log_density(points - shift)) / (2.0 * step)
            error = max(error, float(np.max(np.abs(numeric - beta[i]))))
        return error

    def expectation(self, values, grid: Grid):
        """Integrate over the trailing grid axes; leading axes (time, components) are kept."""
        values = np.asarray(values, dtype=float)
        result = np.tensordot(values, self.grid_weights(grid), axes=grid.d)
        return float(result) if np.ndim(result) == 0 else result

    def lp_norm(self, values, grid: Grid, p: float):
        values = np.abs(np.asarray(values, dtype=float))
        if np.isinf(p):
            return np.max(values.reshape(values.shape[:values.ndim - grid.d] + (-1,)), axis=-1)
        return self.expectation(values ** p, grid) ** (1.0 / p)

    def permuted(self, perm: Sequence[int]) -> "ReferenceMeasureFD":
        inverse = np.argsort(np.asarray(perm))
        return replace(
            self,
            log_density=lambda x: self.log_density(np.asarray(x)[inverse]),
            beta=self.beta.permuted(perm),
            alpha=self.alpha.permuted(perm),
            delta=self.delta.permuted(perm),
        )

    def _check_grid(self, grid: Grid):
        if grid.d != self.d:
            raise DimensionError(f"measure {self.name} lives in dimension {self.d}, grid in {grid.d}")


def gaussian_measure(variances, split: str = "delta") -> ReferenceMeasureFD:
    """Centered Gaussian with independent coordinates; `split` puts beta = -x/var into delta, alpha or half each."""
    variances = np.atleast_1d(np.asarray(variances, dtype=float))
    d = variances.size
    beta = linear_drift(np.diag(-1.0 / variances), name="gaussian")
    shares = {"delta": (0.0, 1.0), "alpha": (1.0, 0.0), "half": (0.5, 0.5)}
    if split not in shares:
        raise ConfigurationError(f"unknown split {split!r}; choose from {sorted(shares)}", key="measure_split")
    a, b = shares[split]
    return ReferenceMeasureFD(
        name=f"gaussian[{split}]",
        d=d,
        log_density=lambda x: -0.5 * np.sum(np.asarray(x) ** 2 / variances.reshape((-1,) + (1,) * (np.ndim(x) - 1)), axis=0),
        beta=beta,
        alpha=linear_drift(np.diag(-a / variances), name="alpha") if a else zero_drift(),
        delta=linear_drift(np.diag(-b / variances), name="delta") if b else zero_drift(),
        normalizer=float(np.prod(np.sqrt(2.0 * np.pi * variances))),
    )


def anharmonic_measure(d: int, coupling: float = 0.1) -> ReferenceMeasureFD:
    r'''
    rho = exp(-sum_j (x_j^2 / 2 + g x_j^4 / 4)) with delta = -x and alpha = -g x^3, a finite-dimensional
    analogue of a Gaussian part plus a confining interaction.
    '''
    if coupling < 0:
        raise ConfigurationError(f"anharmonic coupling must be non-negative, got {coupling}", key="coupling")

    def alpha_values(x):
        return -coupling * np.asarray(x) ** 3

    def alpha_jacobian(x):
        x = np.asarray(x)
        jacobian = np.zeros((d, d) + x.shape[1:])
        for j in range(d):
            jacobian[j, j] = -3.0 * coupling * x[j] ** 2
        return jacobian

    alpha = DriftFieldFD("quartic", drift=alpha_values, jacobian=alpha_jacobian)
    delta = linear_drift(-np.eye(d), name="gaussian")
    return ReferenceMeasureFD(
        name=f"anharmonic[g={coupling:g}]",
        d=d,
        log_density=lambda x: -np.sum(0.5 * np.asarray(x) ** 2 + 0.25 * coupling * np.asarray(x) ** 4, axis=0),
        beta=combine(alpha, delta, name="anharmonic"),
        alpha=alpha,
        delta=delta,
    )


def growth_factor(c: float, t):
    """(e^{ct} - 1) / c, replaced by its limit t when |c| < 1e-12."""
    t = np.asarray(t, dtype=float)
    if abs(c) < ZERO_C_PLUS:
        return t
    return np.expm1(c * t) / c


def _restrict(sol: GridSolution, T: Optional[float]) -> np.ndarray:
    if T is None:
        return np.ones(len(sol.times), dtype=bool)
    return sol.times <= T + 1e-12


def _pair(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(v, w)_0 for v (d,) + shape against w (n_t, d) + shape."""
    return np.sum(v[None] * w, axis=1)


def _minus_norm(v: np.ndarray, mu: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((v / mu.reshape((-1,) + (1,) * (v.ndim - 1))) ** 2, axis=0))


def _plus_norm(w: np.ndarray, mu: np.ndarray, axis: int) -> np.ndarray:
    shape = [1] * w.ndim
    shape[axis] = -1
    return np.sqrt(np.sum((mu.reshape(shape) * w) ** 2, axis=axis))


def _hessians(sol: GridSolution) -> np.ndarray:
    """h[t, i, j] = grad_i w_j, shape (n_t, d, d) + shape."""
    return np.stack([np.stack([grid_gradient(w_j, sol.grid) for w_j in w], axis=1) for w in sol.grad])


def _time_derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.gradient(values, times) if len(times) > 2 else np.full_like(values, np.nan)


class _Fields:
    """Drift, measure and solution fields of one check, evaluated once on the grid."""

    def __init__(self, sol: GridSolution, b: Optional[DriftFieldFD], measure: Optional[ReferenceMeasureFD]):
        self.sol = sol
        self.grid = sol.grid
        self.points = sol.grid.points()
        self.b_field = b or sol.drift
        alpha1, delta1 = self.b_field.parts()
        self.b = self.b_field(self.points)
        self.alpha1 = alpha1(self.points)
        self.delta1 = delta1(self.points)
        self.measure = measure
        if measure is not None:
            self.beta = measure.beta(self.points)
            self.alpha = measure.alpha(self.points)
            self.delta = measure.delta(self.points)

    def E(self, values):
        return self.measure.expectation(values, self.grid)

    @property
    def sup_f(self) -> float:
        return self.sol.sup_initial

    def grad_f_plus_sup(self, mu: np.ndarray) -> float:
        norm = _plus_norm(self.sol.grad[0], mu, axis=0)
        return float(np.max(norm))


def check_prop2(sol: GridSolution, b: Optional[DriftFieldFD], f, basis: Weights, c_plus: Optional[float] = None,
                boundary_layer: int = 2) -> EstimateReport:
    """sup |grad u(t)|_+ <= e^{c_+ t} sup |grad f|_+ at every snapshot."""
    b = b or sol.drift
    mu = basis_weights(basis, sol.grid.d)
    if c_plus is None:
        c_plus = compute_c_plus(b, sol.grid, mu)
    mask = sol.grid.interior_mask(boundary_layer)
    norms = _plus_norm(sol.grad, mu, axis=1)
    lhs = np.array([np.max(n[mask]) for n in norms])
    rhs = np.exp(c_plus * sol.times) * lhs[0]
    return EstimateReport("gradient_bound", lhs, rhs, times=sol.times,
                          terms={"c_plus": c_plus, "grad_f_plus_sup": lhs[0]})


def check_prop3(sol: GridSolution, b: Optional[DriftFieldFD], f, measure: ReferenceMeasureFD, basis: Weights,
                T: Optional[float] = None, c_plus: Optional[float] = None) -> EstimateReport:
    r'''
    Energy estimate under nu:

        ||u||_2^2 + int_0^t || |grad u|_0 ||_2^2 ds
            <= t ||f||_inf^2 || |alpha - alpha^1|_0 ||_2^2
             + 2 (e^{c_+ t} - 1) / c_+ || |grad f|_+ ||_inf ||f||_inf || |delta - delta^1|_- ||_1 + ||f||_2^2
    '''
    fields = _Fields(sol, b, measure)
    mu = basis_weights(basis, sol.grid.d)
    if c_plus is None:
        c_plus = compute_c_plus(fields.b_field, sol.grid, mu)
    keep = _restrict(sol, T)
    times = sol.times[keep]

    u_sq = fields.E(sol.u[keep] ** 2)
    grad_sq = fields.E(np.sum(sol.grad[keep] ** 2, axis=1))
    lhs = u_sq + cumulative_trapezoid(grad_sq, times, initial=0.0)

    sup_f = fields.sup_f
    alpha_diff = fields.E(np.sum((fields.alpha - fields.alpha1) ** 2, axis=0))
    delta_diff = fields.E(_minus_norm(fields.delta - fields.delta1, mu))
    grad_f = fields.grad_f_plus_sup(mu)
    f_sq = float(u_sq[0])
    alpha_term = times * sup_f ** 2 * alpha_diff
    delta_term = 2.0 * growth_factor(c_plus, times) * grad_f * sup_f * delta_diff
    rhs = alpha_term + delta_term + f_sq
    return EstimateReport(
        "energy_estimate", lhs, rhs, times=times,
        terms={
            "c_plus": c_plus,
            "sup_f": sup_f,
            "f_L2_sq": f_sq,
            "grad_f_plus_sup": grad_f,
            "alpha_diff_L2_sq": alpha_diff,
            "delta_diff_minus_L1": delta_diff,
            "alpha_term": alpha_term,
            "delta_term": delta_term,
        },
    )


def check_prop4(sol: GridSolution, b: Optional[DriftFieldFD], f, measure: ReferenceMeasureFD, basis: Weights,
                eps0: float, c_eps0: float, constant: Optional[float] = None, T: Optional[float] = None,
                c_plus: Optional[float] = None) -> EstimateReport:
    r'''
    The L^4 gradient bound  int_0^t || |grad u|_0 ||_4^4 ds <= C(eps0) * bracket(t).

    Only the existence of C(eps0) is known, so without `constant` the report carries the smallest
    C that makes every snapshot hold, as a sharpness figure.
    '''
    fields = _Fields(sol, b, measure)
    mu = basis_weights(basis, sol.grid.d)
    if c_plus is None:
        c_plus = compute_c_plus(fields.b_field, sol.grid, mu)
    keep = _restrict(sol, T)
    times = sol.times[keep]

    w4 = fields.E(np.sum(sol.grad[keep] ** 2, axis=1) ** 2)
    lhs = cumulative_trapezoid(w4, times, initial=0.0)

    sup_f = fields.sup_f
    grad_f = fields.grad_f_plus_sup(mu)
    alpha_L4 = fields.E(np.sum(fields.alpha ** 2, axis=0) ** 2)
    alpha1_L4 = fields.E(np.sum(fields.alpha1 ** 2, axis=0) ** 2)
    alpha_diff_L2 = fields.E(np.sum((fields.alpha - fields.alpha1) ** 2, axis=0))
    delta_minus = _minus_norm(fields.delta - fields.delta1, mu)
    delta_L2 = fields.E(delta_minus ** 2)
    delta_L1 = fields.E(delta_minus)
    grad_f_L2 = fields.E(np.sum(sol.grad[0] ** 2, axis=0))
    f_L2 = fields.E(sol.u[0] ** 2)

    terms = {
        "alpha": times * sup_f ** 4 * (alpha_L4 + alpha1_L4 + alpha_diff_L2),
        "delta_L2": growth_factor(2.0 * c_plus, times) * sup_f ** 2 * grad_f ** 2 * delta_L2,
        "delta_L1": 2.0 * growth_factor(c_plus, times) * sup_f ** 3 * grad_f * delta_L1,
        "initial_gradient": np.full_like(times, sup_f ** 2 * grad_f_L2),
        "coercivity": np.full_like(times, c_eps0 * f_L2 * sup_f ** 2),
    }
    bracket = sum(terms.values())
    active = (times > 0) & (bracket > 0)
    empirical = float(np.max(lhs[active] / bracket[active])) if np.any(active) else 0.0
    label = None
    if constant is None:
        constant, label = empirical, "empirical-constant"
    return EstimateReport(
        "l4_estimate", lhs, constant * bracket, times=times, label=label, budget=ROUNDING_RTOL * np.abs(lhs),
        terms=dict(terms, bracket=bracket, empirical_C=empirical, constant=constant, eps0=eps0, c_eps0=c_eps0,
                   c_plus=c_plus, sup_f=sup_f, grad_f_plus_sup=grad_f),
    )


def _interior(times: np.ndarray) -> np.ndarray:
    keep = np.zeros(len(times), dtype=bool)
    keep[1:-1] = True
    return keep


def check_lemma1(sol: GridSolution, b: Optional[DriftFieldFD], measure: ReferenceMeasureFD) -> EstimateReport:
    """||du/dt||_2^2 + d/dt || |w|_0 ||_2^2 <= ||(beta - b, w)_0||_2^2 at interior snapshot times."""
    fields = _Fields(sol, b, measure)
    w_sq = fields.E(np.sum(sol.grad ** 2, axis=1))
    keep = _interior(sol.times)
    lhs = fields.E(sol.dudt ** 2) + _time_derivative(w_sq, sol.times)
    rhs = fields.E(_pair(fields.beta - fields.b, sol.grad) ** 2)
    return EstimateReport("lemma1", lhs[keep], rhs[keep], times=sol.times[keep],
                          terms={"w_L2_sq": w_sq[keep]})


def check_lemma3(sol: GridSolution, b: Optional[DriftFieldFD], f, measure: ReferenceMeasureFD) -> EstimateReport:
    r'''
    || |w|_0 ||_4^4 <= 16 ||f||_inf^2 ( 1/2 ||(b - beta, w)_0||_2^2 - 1/4 d/dt || |w|_0 ||_2^2
                                        + sum_ij ||grad_i w_j||_2^2 )
    '''
    fields = _Fields(sol, b, measure)
    keep = _interior(sol.times)
    w_sq = fields.E(np.sum(sol.grad ** 2, axis=1))
    lhs = fields.E(np.sum(sol.grad ** 2, axis=1) ** 2)
    hess_sq = fields.E(np.sum(_hessians(sol) ** 2, axis=(1, 2)))
    mismatch = fields.E(_pair(fields.b - fields.beta, sol.grad) ** 2)
    rhs = 16.0 * fields.sup_f ** 2 * (0.5 * mismatch - 0.25 * _time_derivative(w_sq, sol.times) + hess_sq)
    return EstimateReport("lemma3", lhs[keep], rhs[keep], times=sol.times[keep],
                          terms={"hessian_L2_sq": hess_sq[keep], "drift_mismatch_L2_sq": mismatch[keep]})


def check_lemma2(sol: GridSolution, measure: ReferenceMeasureFD, b: Optional[DriftFieldFD] = None) -> EstimateReport:
    r'''
    The energy identity for w = grad u under nu, checked as an equality at every snapshot:

        1/2 d/dt || |w|_0 ||^2 + sum_ij <grad_i w_j, grad_i w_j>
          = - sum_i <(alpha, grad w_i)_0, w_i> + <(Lambda_delta w, w)_0> + <(delta - b, w)_0, du/dt>
            + <(delta - delta^1, w)_0, (alpha - 2 alpha^1, w)_0> - <(alpha^1, w)_0, (alpha, w)_0>
            + ||(alpha^1, w)_0||^2 + ||(delta - delta^1, w)_0||^2

    d/dt is taken along the scheme, 2 <w, grad(du/dt)>, so only spatial error remains.
    '''
    fields = _Fields(sol, b, measure)
    w = sol.grad
    hess = _hessians(sol)
    grad_ut = np.stack([grid_gradient(ut, sol.grid) for ut in sol.dudt])

    time_term = fields.E(np.sum(w * grad_ut, axis=1))
    hess_sq = fields.E(np.sum(hess ** 2, axis=(1, 2)))
    lhs = time_term + hess_sq

    jacobian = measure.delta.jacobian(fields.points)
    advection = fields.E(np.einsum("j...,tji...,ti...->t...", fields.alpha, hess, w))
    delta_form = fields.E(np.einsum("ti...,ij...,tj...->t...", w, jacobian, w))
    pair_db = _pair(fields.delta - fields.b, w)
    pair_dd = _pair(fields.delta - fields.delta1, w)
    pair_a = _pair(fields.alpha, w)
    pair_a1 = _pair(fields.alpha1, w)
    terms = {
        "alpha_advection": -advection,
        "delta_form": delta_form,
        "du_dt": fields.E(pair_db * sol.dudt),
        "cross": fields.E(pair_dd * (pair_a - 2.0 * pair_a1)),
        "alpha1_alpha": -fields.E(pair_a1 * pair_a),
        "alpha1_sq": fields.E(pair_a1 ** 2),
        "delta_diff_sq": fields.E(pair_dd ** 2),
    }
    rhs = sum(terms.values())
    return EstimateReport("lemma2", lhs, rhs, times=sol.times, kind="equality",
                          terms=dict(terms, time_derivative=time_term, hessian_L2_sq=hess_sq))


def check_identity33(sol: GridSolution, basis: Weights, p: float = 4.0, b: Optional[DriftFieldFD] = None) -> EstimateReport:
    r'''
    The L^p balance of |w|_+ in Lebesgue measure, an equality at every snapshot:

        1/p d/dt || |w|_+ ||_p^p + 4 (p-2)/p^2 || |grad |w|_+^{p/2}|_0 ||_2^2
          + sum_ij <mu_i^2 (grad_j w_i)^2 |w|_+^{p-2}>
          = <(Lambda_b y, y)_+> - 1/p <|w|_+^p div b>,      y = w |w|_+^{p/2 - 1}
    '''
    if p < 2:
        raise ConfigurationError(f"the L^p balance needs p >= 2, got {p}", key="p")
    grid = sol.grid
    b = b or sol.drift
    mu = basis_weights(basis, grid.d)
    mu_field = mu.reshape((-1,) + (1,) * grid.d)
    cells = grid.cell_weights()

    def integrate(values):
        return np.tensordot(values, cells, axes=grid.d)

    points = grid.points()
    jacobian = b.jacobian(points)
    divergence = np.trace(jacobian, axis1=0, axis2=1)
    w = sol.grad
    hess = _hessians(sol)
    grad_ut = np.stack([grid_gradient(ut, grid) for ut in sol.dudt])

    norm = _plus_norm(w, mu, axis=1)
    time_term = integrate(norm ** (p - 2) * np.sum(mu_field[None] ** 2 * w * grad_ut, axis=1))
    power = norm ** (p / 2.0)
    grad_power = np.stack([grid_gradient(v, grid) for v in power])
    power_term = 4.0 * (p - 2.0) / p ** 2 * integrate(np.sum(grad_power ** 2, axis=1))
    hess_term = integrate(np.einsum("i,tji...->t...", mu ** 2, hess ** 2) * norm ** (p - 2))
    lhs = time_term + power_term + hess_term

    y = w * norm[:, None] ** (p / 2.0 - 1.0)
    form = integrate(np.einsum("i,ij...,tj...,ti...->t...", mu ** 2, jacobian, y, y))
    div_term = integrate(norm ** p * divergence) / p
    rhs = form - div_term
    return EstimateReport("identity_lp_balance", lhs, rhs, times=sol.times, kind="equality",
                          terms={"p": p, "time_derivative": time_term, "power_gradient": power_term,
                                 "hessian": hess_term, "jacobian_form": form, "divergence": div_term})


def default_trial_fields(d: int) -> List[Tuple[str, Callable[[np.ndarray], np.ndarray]]]:
    """Constant, linear, bump and oscillating vector fields along each axis."""
    trials = []
    for i in range(d):
        def unit(values, i=i):
            def field(x):
                out = np.zeros_like(x)
                out[i] = values(x)
                return out
            return field

        trials.append((f"const_e{i + 1}", unit(lambda x: np.ones(x.shape[1:]))))
        trials.append((f"linear_e{i + 1}", unit(lambda x, i=i: x[i])))
        trials.append((f"bump_e{i + 1}", unit(lambda x: np.exp(-0.5 * np.sum(x ** 2, axis=0)))))
        trials.append((f"sin_e{i + 1}", unit(lambda x, i=i: np.sin(x[i]))))
    return trials


def check_eq34(delta_drift: DriftFieldFD, measure: ReferenceMeasureFD, trial_ws, grid: Grid):
    r'''
    Scan <(Lambda_delta w, w)_0> <= (1 - eps0) sum_j <(grad_j w, grad_j w)_0> + c <(w, w)_0> over trial fields.

    If some eps0 in (0, 1] works with c = 0, the largest such eps0 is returned; otherwise eps0 = 1 and the
    smallest admissible c.  Finitely many trials only give a necessary condition.
    Returns (eps0, c, report).
    '''
    points = grid.points()
    weights = measure.grid_weights(grid)
    jacobian = delta_drift.jacobian(points)
    rows = []
    for name, trial in trial_ws:
        w = np.asarray(trial(points), dtype=float)
        if w.shape != (grid.d,) + grid.shape:
            raise DimensionError(f"trial field {name} has shape {w.shape} on a grid of shape {grid.shape}")
        grads = np.stack([grid_gradient(w_j, grid) for w_j in w])
        rows.append({
            "trial": name,
            "form": float(np.sum(np.einsum("i...,ij...,j...->...", w, jacobian, w) * weights)),
            "gradient": float(np.sum(np.sum(grads ** 2, axis=(0, 1)) * weights)),
            "mass": float(np.sum(np.sum(w ** 2, axis=0) * weights)),
        })

    eps0, feasible = 1.0, True
    for row in rows:
        if row["gradient"] > 0:
            eps0 = min(eps0, 1.0 - row["form"] / row["gradient"])
        elif row["form"] > 0:
            feasible = False
    if feasible and eps0 > 0:
        c = 0.0
    else:
        eps0 = 1.0
        c = max([0.0] + [row["form"] / row["mass"] for row in rows if row["mass"] > 0])
    for row in rows:
        row["slack"] = (1.0 - eps0) * row["gradient"] + c * row["mass"] - row["form"]
    report = ConditionReport("eq34_scan", {"eps0": eps0, "c_eps0": c, "trials": rows}, status=PASS,
                             label="necessary-condition",
                             notes=[f"{len(rows)} trial fields; a finite scan cannot certify eps0"])
    return eps0, c, report


def with_richardson_budget(coarse: EstimateReport, fine: EstimateReport, factor: float = 1.0) -> EstimateReport:
    """Attach budget = factor * |margin(h) - margin(h/2)| / 3 to the fine-grid report."""
    if coarse.lhs.shape != fine.lhs.shape:
        raise DimensionError(f"{fine.name}: coarse and fine reports have {coarse.lhs.size} and {fine.lhs.size} rows")
    drift = np.abs(coarse.margin - fine.margin)
    report = fine.with_budget(factor * drift / 3.0)
    report.terms = dict(report.terms, coarse_margin=coarse.margin, budget_factor=factor)
    if fine.kind == "equality":
        with np.errstate(divide="ignore", invalid="ignore"):
            report.terms["observed_order"] = np.log2(np.abs(coarse.margin) / np.abs(fine.margin))
    report.notes.append("budget from a Richardson pair h, h/2")
    return report


@dataclass
class ParabolicProblem:
    """Drift, initial datum, reference measure, weights and grid of one a-priori study."""
    drift: DriftFieldFD
    initial: Callable[[np.ndarray], np.ndarray]
    grid: Grid
    final_time: float
    weights: np.ndarray
    measure: Optional[ReferenceMeasureFD] = None
    times: Optional[Sequence[float]] = None
    n_snapshots: int = DEFAULT_SNAPSHOTS

    def solve(self, progress: bool = False) -> GridSolution:
        return solve_cauchy(self.drift, self.initial, self.final_time, self.grid, times=self.times,
                            n_snapshots=self.n_snapshots, progress=progress,
                            leak_weights=self.measure.grid_weights(self.grid) if self.measure is not None else None)

    def refined(self) -> "ParabolicProblem":
        return replace(self, grid=self.grid.refine())

    def permuted(self, perm: Sequence[int]) -> "ParabolicProblem":
        inverse = np.argsort(np.asarray(perm))
        initial = self.initial
        return replace(
            self,
            drift=self.drift.permuted(perm),
            initial=lambda x: initial(np.asarray(x)[inverse]),
            weights=np.asarray(self.weights)[list(perm)],
            measure=self.measure.permuted(perm) if self.measure is not None else None,
        )


def permutation_invariance(problem: ParabolicProblem,
                           checks: Dict[str, Callable[[ParabolicProblem, GridSolution], EstimateReport]],
                           perms: Optional[Sequence[Sequence[int]]] = None, rtol: float = 1e-9) -> ConditionReport:
    """Re-run every check with relabelled coordinates; the scalars must agree."""
    d = problem.grid.d
    perms = list(perms) if perms is not None else [p for p in itertools.permutations(range(d)) if list(p) != list(range(d))]
    base_sol = problem.solve()
    base = {name: check(problem, base_sol) for name, check in checks.items()}
    deviations = {}
    for perm in perms:
        permuted = problem.permuted(perm)
        sol = permuted.solve()
        for name, check in checks.items():
            report = check(permuted, sol)
            scale = max(1.0, float(np.max(np.abs(np.concatenate([base[name].lhs, base[name].rhs])))))
            deviation = max(float(np.max(np.abs(report.lhs - base[name].lhs))),
                            float(np.max(np.abs(report.rhs - base[name].rhs)))) / scale
            key = f"{name}[{','.join(str(k) for k in perm)}]"
            deviations[key] = deviation
    passed = all(v <= rtol for v in deviations.values())
    return ConditionReport("permutation_invariance", {"relative_deviation": deviations, "rtol": rtol},
                           status=PASS if passed else FAIL)
