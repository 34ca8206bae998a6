import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from model.errors import ConfigurationError, DimensionError
from model.free_field import FieldSample, spawn_generators
from model.p_phi2 import WeightedSampleSet
from model.parabolic_solver import DriftFieldFD, Grid, GridSolution, solve_cauchy, stable_dt
from validation.report import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    ConditionReport,
    MonteCarloEstimate,
    ResidualReport,
)

logger = logging.getLogger(__name__)

MARKOV_TOLERANCE = 1e-6
SCHEME_SELF_CHECK = "scheme self-check"


def _batch(x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


@dataclass
class CylinderFunction:
    r'''
    f = G o P_N on the rigged coordinates, with analytic evaluators for G on R^N.

    value:    (S, N) -> (S,)
    gradient: (S, N) -> (S, N)
    hessian:  (S, N) -> (S, N, N)

    Inputs may carry more than N coordinates; only the first N are read.  `monomial` is
    (j, p) when f(x) = x_j^p, with j 1-based.
    '''
    name: str
    dimension: int
    G: Callable[[np.ndarray], np.ndarray]
    grad_G: Callable[[np.ndarray], np.ndarray]
    hess_G: Callable[[np.ndarray], np.ndarray]
    sup_bound: float = np.inf
    grad_bound: float = np.inf
    monomial: Optional[Tuple[int, int]] = None

    def _project(self, x):
        x, single = _batch(x)
        if x.shape[1] < self.dimension:
            raise DimensionError(f"{self.name} depends on {self.dimension} coordinates, got {x.shape[1]}")
        return x[:, :self.dimension], single

    def value(self, x):
        y, single = self._project(x)
        values = self.G(y)
        return float(values[0]) if single else values

    def gradient(self, x):
        y, single = self._project(x)
        values = self.grad_G(y)
        return values[0] if single else values

    def hessian(self, x):
        y, single = self._project(x)
        values = self.hess_G(y)
        return values[0] if single else values

    def laplacian(self, x):
        return np.trace(self.hessian(x), axis1=-2, axis2=-1)

    def __add__(self, other: "CylinderFunction") -> "CylinderFunction":
        n = max(self.dimension, other.dimension)

        def pad(values, d, axes):
            width = [(0, 0)] + [(0, n - d)] * axes
            return np.pad(values, width)

        return CylinderFunction(
            name=f"{self.name}+{other.name}",
            dimension=n,
            G=lambda y: self.G(y[:, :self.dimension]) + other.G(y[:, :other.dimension]),
            grad_G=lambda y: pad(self.grad_G(y[:, :self.dimension]), self.dimension, 1)
            + pad(other.grad_G(y[:, :other.dimension]), other.dimension, 1),
            hess_G=lambda y: pad(self.hess_G(y[:, :self.dimension]), self.dimension, 2)
            + pad(other.hess_G(y[:, :other.dimension]), other.dimension, 2),
            sup_bound=self.sup_bound + other.sup_bound,
            grad_bound=self.grad_bound + other.grad_bound,
        )

    def check_gradient(self, points, step: float = 1e-5) -> float:
        """Max deviation of the gradient evaluator from central differences of G."""
        y, _ = self._project(points)
        analytic = self.grad_G(y)
        error = 0.0
        for i in range(self.dimension):
            shift = np.zeros_like(y)
            shift[:, i] = step
            numeric = (self.G(y + shift) - self.G(y - shift)) / (2.0 * step)
            error = max(error, float(np.max(np.abs(numeric - analytic[:, i]))))
        return error

    def check_bounds(self, points) -> bool:
        y, _ = self._project(points)
        within_sup = np.max(np.abs(self.G(y))) <= self.sup_bound
        within_grad = np.max(np.linalg.norm(self.grad_G(y), axis=1)) <= self.grad_bound
        return bool(within_sup and within_grad)


def constant_function(c: float = 1.0, dimension: int = 1) -> CylinderFunction:
    return CylinderFunction(
        name=f"const[{c:g}]",
        dimension=dimension,
        G=lambda y: np.full(y.shape[0], float(c)),
        grad_G=lambda y: np.zeros_like(y),
        hess_G=lambda y: np.zeros(y.shape + (y.shape[1],)),
        sup_bound=abs(c),
        grad_bound=0.0,
    )


def coordinate_monomial(j: int, power: int = 1) -> CylinderFunction:
    """x_j^power; unbounded, so declared bounds are infinite."""
    if j < 1 or power < 0:
        raise ConfigurationError(f"monomial needs j >= 1 and power >= 0, got j={j}, power={power}", key="cylinder_function")
    k = j - 1

    def G(y):
        return y[:, k] ** power

    def grad_G(y):
        g = np.zeros_like(y)
        if power >= 1:
            g[:, k] = power * y[:, k] ** (power - 1)
        return g

    def hess_G(y):
        h = np.zeros(y.shape + (y.shape[1],))
        if power >= 2:
            h[:, k, k] = power * (power - 1) * y[:, k] ** (power - 2)
        return h

    return CylinderFunction(f"x{j}^{power}", j, G, grad_G, hess_G, monomial=(j, power))


def coordinate_product(i: int, j: int) -> CylinderFunction:
    if i < 1 or j < 1 or i == j:
        raise ConfigurationError(f"product needs two distinct positive indices, got ({i}, {j})", key="cylinder_function")
    a, b = i - 1, j - 1

    def grad_G(y):
        g = np.zeros_like(y)
        g[:, a], g[:, b] = y[:, b], y[:, a]
        return g

    def hess_G(y):
        h = np.zeros(y.shape + (y.shape[1],))
        h[:, a, b] = h[:, b, a] = 1.0
        return h

    return CylinderFunction(f"x{i}*x{j}", max(i, j), lambda y: y[:, a] * y[:, b], grad_G, hess_G)


def gaussian_bump_function(dimension: int = 1, width: float = 1.0, center: Optional[Sequence[float]] = None) -> CylinderFunction:
    r'''
    exp(-|y - c|^2 / (2 w^2)) on R^dimension, an element of FC_b^infinity with
    ||G||_inf = 1 and ||grad G||_inf = 1 / (w sqrt(e)).
    '''
    c = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)
    if c.shape != (dimension,):
        raise DimensionError(f"bump center of shape {c.shape} in dimension {dimension}")

    def G(y):
        return np.exp(-np.sum((y - c) ** 2, axis=1) / (2.0 * width ** 2))

    def grad_G(y):
        return -(y - c) / width ** 2 * G(y)[:, None]

    def hess_G(y):
        s = (y - c) / width ** 2
        outer = s[:, :, None] * s[:, None, :] - np.eye(dimension) / width ** 2
        return outer * G(y)[:, None, None]

    return CylinderFunction(f"bump[d={dimension},w={width:g}]", dimension, G, grad_G, hess_G,
                            sup_bound=1.0, grad_bound=1.0 / (width * np.sqrt(np.e)))


def coordinate_bump(j: int, width: float = 1.0) -> CylinderFunction:
    """exp(-x_j^2 / (2 w^2)), a bounded smooth function of the j-th coordinate alone."""
    k = j - 1

    def G(y):
        return np.exp(-y[:, k] ** 2 / (2.0 * width ** 2))

    def grad_G(y):
        g = np.zeros_like(y)
        g[:, k] = -y[:, k] / width ** 2 * G(y)
        return g

    def hess_G(y):
        h = np.zeros(y.shape + (y.shape[1],))
        h[:, k, k] = (y[:, k] ** 2 / width ** 4 - 1.0 / width ** 2) * G(y)
        return h

    return CylinderFunction(f"bump[x{j},w={width:g}]", j, G, grad_G, hess_G,
                            sup_bound=1.0, grad_bound=1.0 / (width * np.sqrt(np.e)))


def _check_dimension(f: CylinderFunction, sample_set: WeightedSampleSet):
    if f.dimension > sample_set.dimension:
        raise DimensionError(f"{f.name} of dimension {f.dimension} on samples of dimension {sample_set.dimension}")


def dirichlet_energy(f: CylinderFunction, g: CylinderFunction, sample_set: WeightedSampleSet) -> MonteCarloEstimate:
    """E(f, g) = E_nu[(grad f, grad g)_0], estimated on one sample set for both arguments."""
    _check_dimension(f, sample_set)
    _check_dimension(g, sample_set)
    n = min(f.dimension, g.dimension)
    x = sample_set.coordinates
    integrand = np.sum(f.gradient(x)[:, :n] * g.gradient(x)[:, :n], axis=1)
    value, stderr = sample_set.expectation(integrand)
    return MonteCarloEstimate(f"energy[{f.name},{g.name}]", value, stderr, sample_set.ess, sample_set.degenerate)


def apply_A(f: CylinderFunction, beta: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]], sample):
    r'''
    A f = -(trace Hess f + (beta, grad f)_0) at each point.

    `sample` is a FieldSample or an array of coordinates (S, N') with N' >= f.dimension;
    `beta` is an array of the same shape or a callable evaluating it.
    '''
    x = sample.batch() if isinstance(sample, FieldSample) else np.asarray(sample, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    b = beta(x) if callable(beta) else np.atleast_2d(np.asarray(beta, dtype=float))
    if b.shape[0] != x.shape[0] or b.shape[1] < f.dimension:
        raise DimensionError(f"drift of shape {b.shape} for coordinates of shape {x.shape} and {f.name}")
    values = -(f.laplacian(x) + np.sum(b[:, :f.dimension] * f.gradient(x), axis=1))
    return float(values[0]) if single else values


def _drift(sample_set: WeightedSampleSet, beta):
    if beta is not None:
        return beta
    if sample_set.beta is None:
        raise ConfigurationError("sample set carries no drift and none was given", key="beta")
    return sample_set.beta


def symmetry_check(f: CylinderFunction, g: CylinderFunction, sample_set: WeightedSampleSet, beta=None,
                   sigma: float = 4.0) -> ResidualReport:
    """<Af, g> = E(f, g) = <f, Ag> with per-sample paired residuals."""
    _check_dimension(f, sample_set)
    _check_dimension(g, sample_set)
    x = sample_set.coordinates
    b = _drift(sample_set, beta)
    Af, Ag = apply_A(f, b, x), apply_A(g, b, x)
    fx, gx = f.value(x), g.value(x)
    n = min(f.dimension, g.dimension)
    energy = np.sum(f.gradient(x)[:, :n] * g.gradient(x)[:, :n], axis=1)
    return ResidualReport(
        name=f"symmetry[{f.name},{g.name}]",
        estimates={
            "Af_g": sample_set.expectation(Af * gx),
            "f_Ag": sample_set.expectation(fx * Ag),
            "energy": sample_set.expectation(energy),
        },
        residuals={
            "Af_g_minus_energy": sample_set.expectation(Af * gx - energy),
            "f_Ag_minus_energy": sample_set.expectation(fx * Ag - energy),
            "Af_g_minus_f_Ag": sample_set.expectation(Af * gx - fx * Ag),
        },
        sigma=sigma,
        degenerate=sample_set.degenerate,
        ess=sample_set.ess,
    )


def invariance_check(f: CylinderFunction, sample_set: WeightedSampleSet, beta=None, sigma: float = 4.0) -> ResidualReport:
    """<A f, 1> = 0 under the invariant measure."""
    _check_dimension(f, sample_set)
    mean = sample_set.expectation(apply_A(f, _drift(sample_set, beta), sample_set.coordinates))
    return ResidualReport(
        name=f"invariance[{f.name}]",
        estimates={"Af_1": mean},
        residuals={"Af_1": mean},
        sigma=sigma,
        degenerate=sample_set.degenerate,
        ess=sample_set.ess,
    )


def product_gaussian_sample_set(lambdas, count: int, seed: int) -> WeightedSampleSet:
    """Unweighted draws of the product Gaussian x_j ~ N(0, 1/lambda_j), whose drift is beta_j = -lambda_j x_j."""
    lambdas = np.asarray(lambdas, dtype=float)
    rng = spawn_generators(seed, 1)[0]
    x = rng.standard_normal((count, lambdas.size)) / np.sqrt(lambdas)
    return WeightedSampleSet(
        samples=FieldSample(x),
        log_weights=np.zeros(count),
        seed=seed,
        coordinates=x,
        beta=-lambdas * x,
    )


def _values_on_grid(f: CylinderFunction, grid: Grid) -> np.ndarray:
    if f.dimension > grid.d:
        raise DimensionError(f"{f.name} of dimension {f.dimension} on a {grid.d}-dimensional grid")
    points = grid.points().reshape(grid.d, -1).T
    return f.value(points).reshape(grid.shape)


def markov_checks(solution: GridSolution, tol: float = MARKOV_TOLERANCE, interior_fraction: float = 0.5) -> ConditionReport:
    r'''
    Positivity, sup-contraction and conservation of constants for the semigroup behind `solution`.
    Conservation re-solves f = 1 with the same drift and grid and is measured on the inner box. It is a
    self-check of the scheme, which preserves constants exactly, not a property read off `solution`.
    '''
    u0 = solution.initial
    sup_f = solution.sup_initial
    if np.min(u0) >= 0:
        min_u = float(np.min(solution.u))
        positivity = {"applicable": True, "min_u": min_u, "passed": bool(min_u >= -tol)}
    else:
        positivity = {"applicable": False, "passed": True}
    sup_u = np.max(np.abs(solution.u.reshape(len(solution.times), -1)), axis=1)
    contraction = {"sup_u": sup_u, "sup_f": sup_f, "passed": bool(np.all(sup_u <= sup_f + tol))}

    grid = solution.grid
    ones = solve_cauchy(solution.drift, np.ones(grid.shape), float(solution.times[-1]), grid,
                        n_snapshots=len(solution.times) - 1, check_support=False)
    mask = grid.inner_box_mask(interior_fraction)
    deviation = float(np.max(np.abs(ones.u[:, mask] - 1.0)))
    conservation = {"max_deviation": deviation, "passed": bool(deviation <= tol), "kind": SCHEME_SELF_CHECK}

    checks = {"positivity": positivity, "contraction": contraction, "conservation": conservation}
    status = PASS if all(c["passed"] for c in checks.values()) else FAIL
    if status == PASS and not solution.certified:
        status = INCONCLUSIVE
    return ConditionReport("markov", dict(checks, tolerance=tol, certified=solution.certified), status=status,
                           notes=list(solution.notes) + [f"conservation is a {SCHEME_SELF_CHECK} on f = 1"])


def generator_limit_check(f: CylinderFunction, b: DriftFieldFD, grid: Grid, rtol: float = 1e-2,
                          interior_fraction: float = 0.5) -> ConditionReport:
    r'''
    Compare -A f with (u(dt) - u(0)) / dt of one explicit step of the grid scheme, on the inner box.
    The mismatch is the spatial truncation error O(h^2).
    '''
    u0 = _values_on_grid(f, grid)
    dt = stable_dt(b, grid)
    sol = solve_cauchy(b, u0, dt, grid, n_snapshots=1, check_support=False)
    difference_quotient = (sol.u[-1] - sol.u[0]) / dt

    points = grid.points()
    x = points.reshape(grid.d, -1).T
    drift = b(points).reshape(grid.d, -1).T
    exact = -apply_A(f, drift, x).reshape(grid.shape)

    mask = grid.inner_box_mask(interior_fraction)
    error = float(np.max(np.abs(difference_quotient[mask] - exact[mask])))
    scale = max(1.0, float(np.max(np.abs(exact[mask]))))
    status = PASS if error <= rtol * scale else FAIL
    return ConditionReport(f"generator_limit[{f.name},{b.name}]",
                           {"dt": dt, "h": grid.h, "max_error": error, "scale": scale, "rtol": rtol}, status=status)
