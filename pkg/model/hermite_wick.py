import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Tuple

import numpy as np

from model.errors import DomainError

logger = logging.getLogger(__name__)

# beyond this |t| the power sum loses digits to cancellation
_RECURRENCE_CUTOFF = 4.0


@dataclass(frozen=True)
class HermiteCoefficients:
    """Exact integer coefficients of the probabilists' Hermite polynomial H_n, indexed by power of t."""
    n: int
    coeffs: Tuple[int, ...]

    def __getitem__(self, power):
        return self.coeffs[power]

    @property
    def leading(self) -> int:
        return self.coeffs[self.n]

    def as_float(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)


@lru_cache(maxsize=None)
def hermite_coefficients(n: int) -> HermiteCoefficients:
    """
    H_n(t) = sum_m (-1)^m n! / [(n-2m)! 2^m m!] t^{n-2m}, computed in exact integer arithmetic.
    """
    assert n >= 0, f"Hermite degree must be non-negative, got {n}"
    coeffs = [0] * (n + 1)
    for m in range(n // 2 + 1):
        # n!/((n-2m)! 2^m m!) = C(n, 2m) (2m-1)!!
        alpha = comb(n, 2 * m) * factorial(2 * m) // (2 ** m * factorial(m))
        coeffs[n - 2 * m] = (-1) ** m * alpha
    return HermiteCoefficients(n, tuple(coeffs))


def hermite_recurrence_coefficients(n: int) -> Tuple[Fraction, ...]:
    """Coefficients of H_n from H_{k+1} = t H_k - k H_{k-1}, in rational arithmetic."""
    assert n >= 0, f"Hermite degree must be non-negative, got {n}"
    previous, current = [Fraction(0)], [Fraction(1)]
    for k in range(n):
        shifted = [Fraction(0)] + current
        lowered = previous + [Fraction(0)] * (len(shifted) - len(previous))
        previous, current = current, [a - k * b for a, b in zip(shifted, lowered)]
    return tuple(current)


def hermite_table(nmax: int, t):
    """Stack H_0(t), ..., H_nmax(t) by the three-term recurrence; shape (nmax + 1,) + shape(t)."""
    assert nmax >= 0, f"Hermite degree must be non-negative, got {nmax}"
    t = np.asarray(t, dtype=float)
    table = np.empty((nmax + 1,) + t.shape)
    table[0] = 1.0
    if nmax >= 1:
        table[1] = t
    for k in range(1, nmax):
        table[k + 1] = t * table[k] - k * table[k - 1]
    return table


def hermite_eval(n: int, t):
    assert n >= 0, f"Hermite degree must be non-negative, got {n}"
    t = np.asarray(t, dtype=float)
    recurrence = hermite_table(n, t)[n]
    if n <= 1:
        return recurrence if recurrence.ndim else float(recurrence)
    power_sum = np.polynomial.polynomial.polyval(t, hermite_coefficients(n).as_float())
    value = np.where(np.abs(t) > _RECURRENCE_CUTOFF, recurrence, power_sum)
    return value if value.ndim else float(value)


def _check_variance(c):
    c = np.asarray(c, dtype=float)
    if np.any(~(c > 0)):
        raise DomainError("Wick ordering needs a strictly positive variance c")
    return c


def wick_power(z, c, n: int):
    """:z^n: = c^{n/2} H_n(z / sqrt(c)), elementwise in z and c."""
    c = _check_variance(c)
    z = np.asarray(z, dtype=float)
    value = c ** (n / 2.0) * hermite_eval(n, z / np.sqrt(c))
    return value if np.ndim(value) else float(value)


def wick_powers(z, c, nmax: int):
    r'''
    All Wick powers :z^0: .. :z^nmax: at once.

    Uses the scaled recurrence :z^{k+1}: = z :z^k: - k c :z^{k-1}:, which avoids dividing by sqrt(c).

    Output shape: (nmax + 1,) + broadcast(z, c).shape
    '''
    assert nmax >= 0, f"Wick degree must be non-negative, got {nmax}"
    c = _check_variance(c)
    z = np.asarray(z, dtype=float)
    z, c = np.broadcast_arrays(z, c)
    table = np.empty((nmax + 1,) + z.shape)
    table[0] = 1.0
    if nmax >= 1:
        table[1] = z
    for k in range(1, nmax):
        table[k + 1] = z * table[k] - k * c * table[k - 1]
    return table
