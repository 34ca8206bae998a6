import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from model.errors import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)

# Coefficients x_1..x_N of a vector in the eigenbasis of T.
CoordinateVector = np.ndarray


@dataclass(frozen=True)
class RiggedBasis:
    r'''
    Truncated eigen-data of the operator T >= 1 generating the rigging H_+ in H_0 in H_-.

    The eigenvectors e_i are never materialized: they are the coordinate directions of a
    CoordinateVector.  Norms:  |x|_-^2 = sum lambda_i^-2 x_i^2,  |x|_+^2 = sum lambda_i^2 x_i^2.
    '''
    lambdas: np.ndarray
    tail_bound: Optional[str] = None
    name: str = field(default="explicit", compare=False)

    def __post_init__(self):
        lambdas = np.asarray(self.lambdas, dtype=float).reshape(-1)
        if lambdas.size == 0:
            raise DimensionError("a rigged basis needs at least one eigenvalue")
        if not np.all(np.isfinite(lambdas)) or np.any(lambdas < 1.0):
            raise ConfigurationError(f"eigenvalues of T must be finite and >= 1, got {lambdas.min()}", key="basis")
        if np.any(np.diff(lambdas) < 0):
            raise ConfigurationError("eigenvalues of T must be non-decreasing", key="basis")
        lambdas.setflags(write=False)
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def dimension(self) -> int:
        return int(self.lambdas.size)

    def __len__(self):
        return self.dimension

    @classmethod
    def from_spec(cls, spec: Union[str, Sequence[float]], dimension: Optional[int] = None) -> "RiggedBasis":
        """
        Build a basis from a config value: ``power:p`` (lambda_i = i^p, needs ``dimension``)
        or an explicit list / comma separated string of eigenvalues.
        """
        if isinstance(spec, str) and spec.strip().startswith("power:"):
            if dimension is None or dimension < 1:
                raise ConfigurationError("power:p bases need a positive truncation level", key="basis")
            try:
                p = float(spec.split(":", 1)[1])
            except ValueError:
                raise ConfigurationError(f"cannot parse exponent in {spec!r}", key="basis")
            if p <= 0.5:
                # sum i^{-2p} diverges: T^-1 would not be Hilbert-Schmidt
                raise ConfigurationError(f"power:{p} violates sum lambda_i^-2 < inf", key="basis")
            lambdas = np.arange(1, dimension + 1, dtype=float) ** p
            return cls(lambdas, tail_bound=f"zeta({2 * p:g})", name=spec.strip())
        if isinstance(spec, str):
            try:
                values = [float(v) for v in spec.replace(";", ",").split(",") if v.strip()]
            except ValueError:
                raise ConfigurationError(f"cannot parse eigenvalue list {spec!r}", key="basis")
        else:
            values = list(spec)
        basis = cls(np.asarray(values, dtype=float))
        if dimension is not None:
            basis = basis.truncate(dimension)
        return basis

    def truncate(self, dimension: int) -> "RiggedBasis":
        if dimension < 1 or dimension > self.dimension:
            raise DimensionError(f"cannot truncate a basis of dimension {self.dimension} to {dimension}")
        return RiggedBasis(self.lambdas[:dimension], tail_bound=self.tail_bound, name=self.name)

    def hilbert_schmidt_partial_sums(self) -> np.ndarray:
        return np.cumsum(self.lambdas ** -2.0)


def _paired(x, basis: RiggedBasis) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != basis.dimension:
        raise DimensionError(f"vector of length {x.shape[-1]} paired with a basis of dimension {basis.dimension}")
    return x


def norm_minus(x: CoordinateVector, basis: RiggedBasis):
    x = _paired(x, basis)
    return np.sqrt(np.sum((x / basis.lambdas) ** 2, axis=-1))


def norm_plus(x: CoordinateVector, basis: RiggedBasis):
    x = _paired(x, basis)
    return np.sqrt(np.sum((x * basis.lambdas) ** 2, axis=-1))


def norm_zero(x: CoordinateVector):
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)


def inner_minus(y: CoordinateVector, z: CoordinateVector, basis: RiggedBasis):
    y, z = _paired(y, basis), _paired(z, basis)
    return np.sum(y * z / basis.lambdas ** 2, axis=-1)


def inner_zero(y: CoordinateVector, z: CoordinateVector):
    y, z = np.asarray(y, dtype=float), np.asarray(z, dtype=float)
    if y.shape[-1] != z.shape[-1]:
        raise DimensionError(f"cannot pair vectors of length {y.shape[-1]} and {z.shape[-1]}")
    return np.sum(y * z, axis=-1)


def inner_plus(y: CoordinateVector, z: CoordinateVector, basis: RiggedBasis):
    y, z = _paired(y, basis), _paired(z, basis)
    return np.sum(basis.lambdas ** 2 * y * z, axis=-1)


def project(x: CoordinateVector, M: int) -> CoordinateVector:
    x = np.asarray(x, dtype=float)
    if M < 1 or M > x.shape[-1]:
        raise DimensionError(f"cannot project a vector of length {x.shape[-1]} onto the first {M} coordinates")
    return x[..., :M].copy()
