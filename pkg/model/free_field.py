import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from model.errors import DimensionError, DomainError

logger = logging.getLogger(__name__)

_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class RectangleDomain:
    """The open rectangle (0, L1) x (0, L2)."""
    L1: float = 1.0
    L2: float = 1.0

    def __post_init__(self):
        if not (self.L1 > 0 and self.L2 > 0):
            raise DomainError(f"rectangle sides must be positive, got ({self.L1}, {self.L2})")

    @property
    def area(self) -> float:
        return self.L1 * self.L2

    def check_points(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != 2:
            raise DimensionError(f"points in the rectangle have two coordinates, got shape {points.shape}")
        x, y = points[..., 0], points[..., 1]
        inside = (x >= -_BOUNDARY_TOL) & (x <= self.L1 + _BOUNDARY_TOL) & (y >= -_BOUNDARY_TOL) & (y <= self.L2 + _BOUNDARY_TOL)
        if not np.all(inside):
            raise DomainError(f"point outside the closed rectangle [0,{self.L1}]x[0,{self.L2}]")
        return points


@dataclass(frozen=True)
class NeumannMode:
    r'''
    Neumann eigenfunction of (-Laplacian + 1) on the rectangle:

        e_{m,n}(x, y) = norm_const * cos(pi m x / L1) * cos(pi n y / L2)
        eigenvalue    = pi^2 m^2 / L1^2 + pi^2 n^2 / L2^2 + 1
    '''
    m: int
    n: int
    eigenvalue: float
    norm_const: float
    L1: float
    L2: float

    def __call__(self, x, y):
        return self.norm_const * np.cos(np.pi * self.m * x / self.L1) * np.cos(np.pi * self.n * y / self.L2)

    def gradient(self, x, y):
        kx, ky = np.pi * self.m / self.L1, np.pi * self.n / self.L2
        dx = -self.norm_const * kx * np.sin(kx * x) * np.cos(ky * y)
        dy = -self.norm_const * ky * np.cos(kx * x) * np.sin(ky * y)
        return np.stack([dx, dy])


def make_mode(domain: RectangleDomain, m: int, n: int) -> NeumannMode:
    eigenvalue = (np.pi * m / domain.L1) ** 2 + (np.pi * n / domain.L2) ** 2 + 1.0
    norm_const = np.sqrt((2.0 if m else 1.0) * (2.0 if n else 1.0) / domain.area)
    return NeumannMode(m, n, float(eigenvalue), float(norm_const), domain.L1, domain.L2)


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on the rectangle, flattened to nodes (Q, 2) and weights (Q,)."""
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, domain: RectangleDomain, order: int) -> "QuadratureRule":
        assert order >= 1, f"quadrature order must be positive, got {order}"
        s, w = np.polynomial.legendre.leggauss(order)
        x, wx = 0.5 * domain.L1 * (s + 1.0), 0.5 * domain.L1 * w
        y, wy = 0.5 * domain.L2 * (s + 1.0), 0.5 * domain.L2 * w
        X, Y = np.meshgrid(x, y, indexing="ij")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
        weights = np.outer(wx, wy).ravel()
        return cls(order, nodes, weights)

    def __len__(self):
        return self.weights.size


class ModeBasis(Sequence):
    """
    The K Neumann modes of smallest eigenvalue on a rectangle, ordered by eigenvalue then (m, n).
    Immutable; quadrature tables are cached per order.
    """

    def __init__(self, domain: RectangleDomain, modes: List[NeumannMode]):
        self.domain = domain
        self._modes = tuple(modes)
        self.eigenvalues = np.array([mode.eigenvalue for mode in self._modes])
        self.eigenvalues.setflags(write=False)
        self._tables: Dict[int, tuple] = {}

    def __getitem__(self, index):
        return self._modes[index]

    def __len__(self):
        return len(self._modes)

    def __repr__(self):
        return f"ModeBasis(domain={self.domain}, K={len(self)})"

    @property
    def K(self) -> int:
        return len(self._modes)

    @property
    def max_index(self) -> int:
        return max(max(mode.m, mode.n) for mode in self._modes)

    def default_quadrature_order(self, degree: int = 2) -> int:
        """Gauss-Legendre order per axis resolving products of `degree` modes."""
        return max(16, 2 * degree * self.max_index + 8)

    def evaluate(self, points) -> np.ndarray:
        """Eigenfunction values, shape (K,) + points.shape[:-1]."""
        points = np.asarray(points, dtype=float)
        x, y = points[..., 0], points[..., 1]
        return np.stack([mode(x, y) for mode in self._modes])

    def quadrature(self, order: Optional[int] = None):
        """Return (rule, table) with table[j, q] = e_j(node_q)."""
        order = order or self.default_quadrature_order()
        if order not in self._tables:
            rule = QuadratureRule.gauss_legendre(self.domain, order)
            self._tables[order] = (rule, self.evaluate(rule.nodes))
        return self._tables[order]

    def local_variance_at_nodes(self, order: Optional[int] = None) -> np.ndarray:
        _, table = self.quadrature(order)
        return np.sum(table ** 2 / self.eigenvalues[:, None], axis=0)


@dataclass
class FieldSample:
    """Coefficients z_j = <z, e_j> of one sample (shape (K,)) or a batch of samples (shape (S, K))."""
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim not in (1, 2):
            raise DimensionError(f"field coefficients must be (K,) or (S, K), got {self.coeffs.shape}")

    @property
    def K(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def is_batch(self) -> bool:
        return self.coeffs.ndim == 2

    def __len__(self):
        return self.coeffs.shape[0] if self.is_batch else 1

    def batch(self) -> np.ndarray:
        return np.atleast_2d(self.coeffs)

    def __getitem__(self, index):
        return FieldSample(self.batch()[index])


def _check_pairing(sample: FieldSample, modes: ModeBasis):
    if sample.K != len(modes):
        raise DimensionError(f"sample with {sample.K} coefficients paired with {len(modes)} modes")


def build_modes(domain: RectangleDomain, K: int) -> ModeBasis:
    if K < 1:
        raise DimensionError(f"truncation level must be positive, got {K}")
    candidates = [make_mode(domain, m, n) for m in range(K) for n in range(K)]
    candidates.sort(key=lambda mode: (round(mode.eigenvalue, 9), mode.m, mode.n))
    return ModeBasis(domain, candidates[:K])


def _eigenvalues(modes) -> np.ndarray:
    return modes.eigenvalues if isinstance(modes, ModeBasis) else np.asarray(modes, dtype=float)


def h_alpha_norm(l, modes: Union[ModeBasis, Sequence], alpha: float):
    lambdas = _eigenvalues(modes)
    l = np.asarray(l, dtype=float)
    if l.shape[-1] != lambdas.size:
        raise DimensionError(f"coefficient sequence of length {l.shape[-1]} paired with {lambdas.size} modes")
    return np.sqrt(np.sum(lambdas ** alpha * l ** 2, axis=-1))


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    """Independent PCG64 streams, one per batch, derived from a single seed."""
    return [np.random.Generator(np.random.PCG64(child)) for child in np.random.SeedSequence(seed).spawn(count)]


def sample_free_field(modes: ModeBasis, rng: Union[np.random.Generator, int], count: Optional[int] = None) -> FieldSample:
    """Independent N(0, 1/lambda_j) coefficients: the truncated free field with covariance ||l||^2_{H_-1}."""
    if not isinstance(rng, np.random.Generator):
        rng = spawn_generators(int(rng), 1)[0]
    shape = (len(modes),) if count is None else (count, len(modes))
    return FieldSample(rng.standard_normal(shape) / np.sqrt(modes.eigenvalues))


def field_point_value(sample: FieldSample, modes: ModeBasis, x):
    _check_pairing(sample, modes)
    points = modes.domain.check_points(x)
    values = np.tensordot(sample.coeffs, modes.evaluate(points), axes=([-1], [0]))
    return values if np.ndim(values) else float(values)


def local_variance(modes: ModeBasis, x):
    points = modes.domain.check_points(x)
    table = modes.evaluate(points)
    values = np.tensordot(1.0 / modes.eigenvalues, table ** 2, axes=([0], [0]))
    return values if np.ndim(values) else float(values)


def gram_matrix(modes: ModeBasis, order: Optional[int] = None) -> np.ndarray:
    rule, table = modes.quadrature(order)
    return (table * rule.weights) @ table.T


def rigging_admissible(alpha: float, delta: float) -> bool:
    return bool(alpha > max(0.0, 1.0 - delta / 2.0))


def hs_partial_sums(modes: Union[ModeBasis, Sequence], delta: float) -> np.ndarray:
    """Partial sums of sum_n lambda_n^{-1-delta}, finite for delta > 0 on the rectangle."""
    return np.cumsum(_eigenvalues(modes) ** (-1.0 - delta))


def export_samples_csv(sample: FieldSample, path: str) -> pd.DataFrame:
    df = pd.DataFrame(sample.batch(), columns=[f"z_{j + 1}" for j in range(sample.K)])
    df.to_csv(path, index=False)
    return df
