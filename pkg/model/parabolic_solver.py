import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from model.errors import ConfigurationError, DimensionError, DomainError, NumericalAbort
from model.rigged_space import RiggedBasis

logger = logging.getLogger(__name__)

MAX_DIMENSION = 3
# explicit central differences stay monotone up to this cell Peclet number
PECLET_LIMIT = 2.0
BLOWUP_FACTOR = 10.0
SUPPORT_LAYER = 3
LEAK_TOLERANCE = 1e-6
DEFAULT_SNAPSHOTS = 32


@dataclass(frozen=True)
class Grid:
    """Node grid on the box [-R, R]^d with `points_per_axis` nodes per axis, h = 2R / (n - 1)."""
    d: int
    radius: float
    points_per_axis: int
    safety_factor: float = 0.9
    dt: Optional[float] = None

    def __post_init__(self):
        if not 1 <= self.d <= MAX_DIMENSION:
            raise ConfigurationError(f"grid dimension must be in 1..{MAX_DIMENSION}, got {self.d}", key="dimension")
        if self.radius <= 0:
            raise ConfigurationError(f"box radius must be positive, got {self.radius}", key="radius")
        if self.points_per_axis < 2 * SUPPORT_LAYER + 3:
            raise ConfigurationError(f"need at least {2 * SUPPORT_LAYER + 3} points per axis", key="points_per_axis")
        if not 0 < self.safety_factor <= 1:
            raise ConfigurationError(f"safety factor must lie in (0, 1], got {self.safety_factor}", key="safety_factor")

    @property
    def h(self) -> float:
        return 2.0 * self.radius / (self.points_per_axis - 1)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.d

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.points_per_axis)

    def points(self) -> np.ndarray:
        """Coordinates of every node, shape (d,) + shape."""
        return np.stack(np.meshgrid(*([self.axis] * self.d), indexing="ij"))

    def cell_weights(self) -> np.ndarray:
        """Tensor trapezoid weights; these make the Neumann Laplacian exactly mass-conserving."""
        w = np.full(self.points_per_axis, self.h)
        w[[0, -1]] = 0.5 * self.h
        weights = w
        for _ in range(self.d - 1):
            weights = np.multiply.outer(weights, w)
        return weights

    def interior_mask(self, layer: int = 2) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(layer, self.points_per_axis - layer),) * self.d] = True
        return mask

    def inner_box_mask(self, fraction: float = 0.5) -> np.ndarray:
        points = self.points()
        return np.all(np.abs(points) <= fraction * self.radius + 1e-12, axis=0)

    def max_stable_dt(self, drift_bound: float = 0.0) -> float:
        """safety / (2d/h^2 + drift_bound/h) <= safety * h^2 / (2d)."""
        return self.safety_factor / (2.0 * self.d / self.h ** 2 + drift_bound / self.h)

    def refine(self) -> "Grid":
        if self.dt is not None:
            logger.warning(f"Refined grid drops the fixed dt={self.dt}; it steps at its own stability bound")
        return Grid(self.d, self.radius, 2 * self.points_per_axis - 1, self.safety_factor)

    def coarsen(self) -> "Grid":
        if self.points_per_axis % 2 == 0:
            raise ConfigurationError("only grids with an odd node count can be coarsened", key="points_per_axis")
        return Grid(self.d, self.radius, (self.points_per_axis + 1) // 2, self.safety_factor)

    def restrict(self, values: np.ndarray, finer: "Grid") -> np.ndarray:
        """Sample values living on `finer` (this grid refined) at this grid's nodes."""
        stride = (finer.points_per_axis - 1) // (self.points_per_axis - 1)
        return values[(Ellipsis,) + (slice(None, None, stride),) * self.d]


def _zero_jacobian(points):
    d = points.shape[0]
    return np.zeros((d, d) + points.shape[1:])


@dataclass
class DriftFieldFD:
    r'''
    Finite-dimensional drift b with Jacobian access.

    drift(points)    -> (d,) + S      b_j at each point
    jacobian(points) -> (d, d) + S    entry [i, j] = grad_i b_j

    `alpha_part` and `delta_part` hold a decomposition b = alpha^1 + delta^1; without one,
    alpha^1 = 0 and delta^1 = b.
    '''
    name: str
    drift: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    alpha_part: Optional["DriftFieldFD"] = None
    delta_part: Optional["DriftFieldFD"] = None
    smoothness: str = "C^infinity"

    def __call__(self, points):
        return self.drift(np.asarray(points, dtype=float))

    def divergence(self, points):
        return np.trace(self.jacobian(np.asarray(points, dtype=float)), axis1=0, axis2=1)

    def parts(self) -> Tuple["DriftFieldFD", "DriftFieldFD"]:
        if self.alpha_part is None and self.delta_part is None:
            return zero_drift(), self
        return (self.alpha_part or zero_drift(), self.delta_part or zero_drift())

    def __add__(self, other: "DriftFieldFD") -> "DriftFieldFD":
        return DriftFieldFD(
            name=f"{self.name}+{other.name}",
            drift=lambda x: self.drift(x) + other.drift(x),
            jacobian=lambda x: self.jacobian(x) + other.jacobian(x),
        )

    def __neg__(self) -> "DriftFieldFD":
        return DriftFieldFD(name=f"-{self.name}", drift=lambda x: -self.drift(x), jacobian=lambda x: -self.jacobian(x))

    def __sub__(self, other: "DriftFieldFD") -> "DriftFieldFD":
        return self + (-other)

    def permuted(self, perm: Sequence[int]) -> "DriftFieldFD":
        """The same drift after relabelling coordinates: new coordinate k is old coordinate perm[k]."""
        perm = np.asarray(perm)
        inverse = np.argsort(perm)
        parts = None if self.alpha_part is None and self.delta_part is None else [p.permuted(perm) for p in self.parts()]
        return DriftFieldFD(
            name=self.name,
            drift=lambda x: self.drift(np.asarray(x)[inverse])[perm],
            jacobian=lambda x: self.jacobian(np.asarray(x)[inverse])[perm][:, perm],
            alpha_part=parts[0] if parts else None,
            delta_part=parts[1] if parts else None,
            smoothness=self.smoothness,
        )

    def check_jacobian(self, points: np.ndarray, step: float = 1e-4) -> float:
        """Max deviation of the Jacobian evaluator from central differences of b at `points` (d, P)."""
        points = np.asarray(points, dtype=float)
        d = points.shape[0]
        analytic = self.jacobian(points)
        error = 0.0
        for i in range(d):
            shift = np.zeros_like(points)
            shift[i] = step
            numeric = (self.drift(points + shift) - self.drift(points - shift)) / (2.0 * step)
            error = max(error, float(np.max(np.abs(numeric - analytic[i]))))
        return error


def combine(alpha: DriftFieldFD, delta: DriftFieldFD, name: Optional[str] = None) -> DriftFieldFD:
    total = alpha + delta
    total.name = name or total.name
    total.alpha_part, total.delta_part = alpha, delta
    return total


def zero_drift() -> DriftFieldFD:
    return DriftFieldFD("zero", drift=lambda x: np.zeros_like(x), jacobian=_zero_jacobian)


def linear_drift(matrix, name: str = "linear") -> DriftFieldFD:
    """b(x) = A x, so grad_i b_j = A_{ji}."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))

    def drift(x):
        return np.tensordot(A, x, axes=([1], [0]))

    def jacobian(x):
        return np.broadcast_to(A.T.reshape(A.shape + (1,) * (x.ndim - 1)), A.shape + x.shape[1:]).copy()

    return DriftFieldFD(name, drift=drift, jacobian=jacobian)


def constant_drift(vector, name: str = "constant") -> DriftFieldFD:
    v = np.asarray(vector, dtype=float)

    def drift(x):
        return np.broadcast_to(v.reshape((-1,) + (1,) * (x.ndim - 1)), x.shape).copy()

    return DriftFieldFD(name, drift=drift, jacobian=_zero_jacobian)


def symmetrized_plus_bound(jacobian: np.ndarray, weights, power: float = 1.0) -> float:
    r'''
    Largest eigenvalue of the symmetric part of W^p J W^-p over a stack of Jacobians
    (..., d, d) with J[i, j] = grad_i b_j and W = diag(weights).  power=1 gives the (.,.)_+
    one-sided bound c_+, power=-1 the (.,.)_- bound c_-.
    '''
    jacobian = np.asarray(jacobian, dtype=float)
    d = jacobian.shape[-1]
    w = np.asarray(weights, dtype=float)[:d] ** power
    conjugated = w[:, None] * jacobian / w[None, :]
    symmetric = 0.5 * (conjugated + np.swapaxes(conjugated, -1, -2))
    return float(np.max(np.linalg.eigvalsh(symmetric.reshape(-1, d, d))))


def _grid_jacobians(b: DriftFieldFD, grid: Grid) -> np.ndarray:
    jacobian = b.jacobian(grid.points())
    return np.moveaxis(jacobian.reshape(grid.d, grid.d, -1), -1, 0)


Weights = Union[RiggedBasis, Sequence[float], np.ndarray]


def basis_weights(basis: Weights, d: int) -> np.ndarray:
    """The first d weights mu_j of a rigged basis or of an explicit weight sequence."""
    mu = basis.lambdas if isinstance(basis, RiggedBasis) else np.asarray(basis, dtype=float)
    if mu.size < d:
        raise DimensionError(f"{mu.size} weights cannot weight a {d}-dimensional grid")
    return mu[:d]


def compute_c_plus(b: DriftFieldFD, grid: Grid, basis: Weights) -> float:
    return symmetrized_plus_bound(_grid_jacobians(b, grid), basis_weights(basis, grid.d), power=1.0)


def compute_c_minus(b: DriftFieldFD, grid: Grid, basis: Weights) -> float:
    """One-sided bound of (Lambda_b y, y)_- against (y, y)_-, the alternative to c_+ for the delta part."""
    return symmetrized_plus_bound(_grid_jacobians(b, grid), basis_weights(basis, grid.d), power=-1.0)


def _shifted(padded: np.ndarray, axis: int, offset: int) -> np.ndarray:
    index = [slice(1, -1)] * padded.ndim
    index[axis] = slice(1 + offset, padded.shape[axis] - 1 + offset)
    return padded[tuple(index)]


def discrete_generator(b: DriftFieldFD, grid: Grid) -> Callable[[np.ndarray], np.ndarray]:
    r'''
    The scheme's spatial operator  L_h u = Delta_h u + (b, grad_h u)_0  with homogeneous Neumann
    reflection at the box faces.  Advection uses central differences, switched to upwind at
    nodes whose cell Peclet number |b_i| h exceeds 2.
    '''
    h = grid.h
    velocity = b(grid.points())
    upwind = np.abs(velocity) * h > PECLET_LIMIT
    if np.any(upwind):
        logger.info(f"Upwinding switched on at {int(upwind.sum())} node-directions of drift {b.name}")

    def apply(u: np.ndarray) -> np.ndarray:
        padded = np.pad(u, 1, mode="reflect")
        result = np.zeros_like(u)
        for axis in range(grid.d):
            up, down = _shifted(padded, axis, 1), _shifted(padded, axis, -1)
            result += (up - 2.0 * u + down) / h ** 2
            central = (up - down) / (2.0 * h)
            one_sided = np.where(velocity[axis] > 0, up - u, u - down) / h
            result += velocity[axis] * np.where(upwind[axis], one_sided, central)
        return result

    return apply


def grid_gradient(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Central differences inside, second-order one-sided at the faces; shape (d,) + shape."""
    if grid.d == 1:
        return np.gradient(u, grid.h, edge_order=2)[None]
    return np.stack(np.gradient(u, grid.h, edge_order=2))


def _on_grid(f, grid: Grid) -> np.ndarray:
    values = f(grid.points()) if callable(f) else np.asarray(f, dtype=float)
    if values.shape != grid.shape:
        raise DimensionError(f"initial datum of shape {values.shape} on a grid of shape {grid.shape}")
    return np.array(values, dtype=float)


def _boundary_share(u: np.ndarray, grid: Grid, sup_f: float, weights: Optional[np.ndarray] = None,
                    layer: int = SUPPORT_LAYER) -> float:
    """
    Size of u in the boundary layer relative to ||f||_inf: the sup there, or the
    weights-integral of |u| over the layer when reference weights are given.
    """
    outer = ~grid.interior_mask(layer)
    if weights is None:
        return float(np.max(np.abs(u[outer]))) / sup_f
    return float(np.sum(weights[outer] * np.abs(u[outer]))) / sup_f


def _leak_weights(weights: Optional[np.ndarray], grid: Grid) -> Optional[np.ndarray]:
    if weights is None:
        return None
    weights = np.asarray(weights, dtype=float)
    if weights.shape != grid.shape:
        raise DimensionError(f"leak weights of shape {weights.shape} on a grid of shape {grid.shape}")
    if np.any(weights < 0) or weights.sum() <= 0:
        raise DomainError("leak weights must be non-negative with positive total")
    return weights / weights.sum()


@dataclass
class GridSolution:
    r'''
    Snapshots of the Cauchy problem  du/dt = Delta u + (b, grad u)_0,  u(0) = f.

    u:    (n_t,) + shape
    grad: (n_t, d) + shape    central differences of u
    dudt: (n_t,) + shape      the scheme increment L_h u at the snapshot
    '''
    grid: Grid
    drift: DriftFieldFD
    times: np.ndarray
    u: np.ndarray
    grad: np.ndarray
    dudt: np.ndarray
    dt: float
    steps: int
    boundary_leak: float
    certified: bool
    notes: List[str] = field(default_factory=list)

    @property
    def initial(self) -> np.ndarray:
        return self.u[0]

    @property
    def sup_initial(self) -> float:
        return float(np.max(np.abs(self.u[0])))

    def index(self, t: float, atol: float = 1e-9) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > atol:
            raise DomainError(f"no snapshot at t={t}; available times {self.times.min()}..{self.times.max()}")
        return k

    def at(self, t: float) -> np.ndarray:
        return self.u[self.index(t)]


def snapshot_times(T: float, times: Optional[Sequence[float]] = None, n_snapshots: int = DEFAULT_SNAPSHOTS) -> np.ndarray:
    grid_times = np.linspace(0.0, T, n_snapshots + 1)
    extra = np.asarray([] if times is None else list(times), dtype=float)
    if np.any(extra < 0) or np.any(extra > T + 1e-12):
        raise ConfigurationError(f"snapshot times must lie in [0, {T}]", key="snapshot_times")
    merged = np.unique(np.round(np.concatenate([grid_times, extra]), 12))
    return merged


def stable_dt(b: DriftFieldFD, grid: Grid) -> float:
    """The step the solver will take: grid.dt if set and stable, else the stability bound."""
    velocity = b(grid.points())
    drift_bound = float(np.sum(np.max(np.abs(velocity).reshape(grid.d, -1), axis=1)))
    dt_max = grid.max_stable_dt(drift_bound)
    if grid.dt is None:
        return dt_max
    if grid.dt > dt_max:
        raise ConfigurationError(f"dt={grid.dt} exceeds the stability bound {dt_max:.3e}", key="dt")
    return grid.dt


def solve_cauchy(b: DriftFieldFD, f, T: float, grid: Grid, times: Optional[Sequence[float]] = None,
                 n_snapshots: int = DEFAULT_SNAPSHOTS, check_support: bool = True, progress: bool = False,
                 leak_weights: Optional[np.ndarray] = None) -> GridSolution:
    """
    Explicit Euler march of the Cauchy problem to time T, stopping exactly on every snapshot time.
    Blow-up beyond 10 ||f||_inf raises NumericalAbort.

    The boundary leak is the sup of |u| on the outer SUPPORT_LAYER cells over ||f||_inf, or,
    with `leak_weights` (e.g. the reference measure on the grid), the weighted mass of |u| there.
    """
    if T < 0:
        raise ConfigurationError(f"final time must be non-negative, got {T}", key="final_time")
    u = _on_grid(f, grid)
    weights = _leak_weights(leak_weights, grid)
    sup_f = float(np.max(np.abs(u)))
    notes = []
    if check_support and sup_f > 0 and _boundary_share(u, grid, sup_f, weights) > LEAK_TOLERANCE:
        notes.append(f"initial datum is not supported {SUPPORT_LAYER} cells inside the box")
        logger.warning(f"Initial datum reaches the {SUPPORT_LAYER}-cell boundary layer of the box; truncation is not certified")

    dt_max = stable_dt(b, grid)
    generator = discrete_generator(b, grid)
    times = snapshot_times(T, times, n_snapshots)

    snapshots, gradients, increments = [], [], []
    bound = BLOWUP_FACTOR * max(sup_f, np.finfo(float).tiny)
    leak, t, steps = 0.0, 0.0, 0
    with tqdm(total=len(times), desc=f"solve[{b.name}]", disable=not progress) as bar:
        for target in times:
            while target - t > 1e-13:
                step = min(dt_max, target - t)
                u = u + step * generator(u)
                t = target if target - t - step < 1e-13 else t + step
                steps += 1
                peak = float(np.max(np.abs(u)))
                if not np.isfinite(peak) or (sup_f > 0 and peak > bound):
                    raise NumericalAbort(
                        f"solution of drift {b.name} blew up at t={t:.4g}",
                        diagnostic={"t": t, "max_abs_u": peak, "bound": bound, "dt": dt_max, "h": grid.h},
                    )
            increment = generator(u)
            snapshots.append(u.copy())
            gradients.append(grid_gradient(u, grid))
            increments.append(increment)
            if sup_f > 0:
                leak = max(leak, _boundary_share(u, grid, sup_f, weights))
            bar.update(1)

    certified = not notes and leak <= LEAK_TOLERANCE
    if leak > LEAK_TOLERANCE and check_support:
        logger.warning(f"Mass near the box boundary reached {leak:.2e} of ||f||_inf for drift {b.name}")
    return GridSolution(
        grid=grid,
        drift=b,
        times=times,
        u=np.stack(snapshots),
        grad=np.stack(gradients),
        dudt=np.stack(increments),
        dt=dt_max,
        steps=steps,
        boundary_leak=leak,
        certified=certified,
        notes=notes,
    )


def gradient_sup_norm_plus(sol: GridSolution, t: float, basis: Weights, boundary_layer: int = 2) -> float:
    w = sol.grad[sol.index(t)]
    mu = basis_weights(basis, sol.grid.d).reshape((-1,) + (1,) * sol.grid.d)
    norm = np.sqrt(np.sum((mu * w) ** 2, axis=0))
    return float(np.max(norm[sol.grid.interior_mask(boundary_layer)]))


def gaussian_bump(points, width: float = 1.0, center=None, amplitude: float = 1.0):
    points = np.asarray(points, dtype=float)
    center = np.zeros(points.shape[0]) if center is None else np.asarray(center, dtype=float)
    shifted = points - center.reshape((-1,) + (1,) * (points.ndim - 1))
    return amplitude * np.exp(-np.sum(shifted ** 2, axis=0) / (2.0 * width ** 2))


def heat_kernel_bump(points, t: float, width: float = 1.0, center=None, amplitude: float = 1.0):
    """Exact solution of du/dt = Delta u from a Gaussian bump: the variance grows by 2t."""
    d = np.asarray(points).shape[0]
    spread = width ** 2 + 2.0 * t
    return (width ** 2 / spread) ** (d / 2.0) * gaussian_bump(points, np.sqrt(spread), center, amplitude)


def mehler_reference(f: Callable[[np.ndarray], np.ndarray], points, t: float, nodes: int = 40) -> np.ndarray:
    r'''
    Ornstein-Uhlenbeck semigroup of Delta - (x, grad): u(t, x) = E f(e^{-t} x + sqrt(1 - e^{-2t}) Z)
    with Z standard normal, by tensor Gauss-Hermite quadrature.
    '''
    points = np.asarray(points, dtype=float)
    d = points.shape[0]
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / np.sqrt(2.0 * np.pi)
    scale = np.sqrt(1.0 - np.exp(-2.0 * t))
    result = np.zeros(points.shape[1:])
    for index in np.ndindex(*(nodes,) * d):
        shift = np.array([z[k] for k in index]).reshape((-1,) + (1,) * (points.ndim - 1))
        result += np.prod([w[k] for k in index]) * f(np.exp(-t) * points + scale * shift)
    return result


def export_snapshots_csv(sol: GridSolution, path: str) -> pd.DataFrame:
    points = sol.grid.points().reshape(sol.grid.d, -1)
    frames = []
    for t, u in zip(sol.times, sol.u):
        frame = pd.DataFrame({f"x{i + 1}": points[i] for i in range(sol.grid.d)})
        frame.insert(0, "t", t)
        frame["u"] = u.ravel()
        frames.append(frame)
    df = pd.concat(frames, ignore_index=True)
    df.to_csv(path, index=False)
    return df
