import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from tqdm.auto import tqdm

from model.errors import ConfigurationError, DimensionError
from model.free_field import (
    FieldSample,
    ModeBasis,
    RectangleDomain,
    build_modes,
    rigging_admissible,
    sample_free_field,
    spawn_generators,
)
from model.hermite_wick import wick_powers
from model.parabolic_solver import symmetrized_plus_bound
from model.rigged_space import RiggedBasis
from validation.report import FAIL, INCONCLUSIVE, PASS, ConditionReport, ResidualReport

logger = logging.getLogger(__name__)

# couplings above this are allowed but the perturbative cross-checks lose meaning
LARGE_COUPLING = 0.5
STABLE_QUADRATURE_RTOL = 1e-6


@dataclass(frozen=True)
class WickSpec:
    r'''
    Interaction V(z) = sum_{n=0}^{2N} a_n :z^n:(1_Lambda) at truncation K, with rigging indices
    (alpha_idx, delta_idx) subject to alpha_idx > max(0, 1 - delta_idx / 2).

    The density phi = exp(-V/2) needs a confining leading term, so a non-free spec has even degree 2N
    and a_{2N} > 0.  The all-zero spec is the free field.
    '''
    coefficients: Tuple[float, ...]
    K: int = 16
    alpha_idx: float = 1.0
    delta_idx: float = 1.0
    check_invariants: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(a) for a in self.coefficients))
        if self.K < 1:
            raise ConfigurationError(f"truncation level must be positive, got {self.K}", key="K")
        if not self.check_invariants:
            return
        if not rigging_admissible(self.alpha_idx, self.delta_idx):
            raise ConfigurationError(
                f"rigging indices alpha={self.alpha_idx}, delta={self.delta_idx} violate alpha > max(0, 1 - delta/2)",
                key="alpha_idx",
            )
        if not self.is_free:
            if self.degree % 2:
                raise ConfigurationError(f"interaction degree must be even, got {self.degree}", key="coefficients")
            if self.coefficients[self.degree] <= 0:
                raise ConfigurationError("leading Wick coefficient must be positive for exp(-V) to be integrable", key="coefficients")
        if max((abs(a) for a in self.coefficients), default=0.0) > LARGE_COUPLING:
            logger.warning(f"Coupling {self.coefficients} exceeds {LARGE_COUPLING}; perturbative cross-checks are uninformative")

    @classmethod
    def from_string(cls, coefficients: str, **kwargs) -> "WickSpec":
        try:
            values = [float(a) for a in coefficients.replace(";", ",").split(",") if a.strip()]
        except ValueError:
            raise ConfigurationError(f"cannot parse Wick coefficients {coefficients!r}", key="coefficients")
        return cls(tuple(values), **kwargs)

    @property
    def degree(self) -> int:
        nonzero = [n for n, a in enumerate(self.coefficients) if a != 0.0]
        return nonzero[-1] if nonzero else 0

    @property
    def is_free(self) -> bool:
        return all(a == 0.0 for a in self.coefficients)

    def bookkeeping(self, modes: ModeBasis) -> "RiggingBookkeeping":
        return RiggingBookkeeping(modes.eigenvalues, self.alpha_idx, self.delta_idx)


@dataclass(frozen=True)
class RiggingBookkeeping:
    r'''
    Every exponent of the H_alpha rigging in one place.

    Field coefficients z_j = <z, e_j>_{L^2}.  The orthonormal basis of H_0 = H_alpha is
    lambda_j^{-alpha/2} e_j, so the rigged coordinates are x_j = lambda_j^{alpha/2} z_j and
    the directional derivative along that basis vector is lambda_j^{-alpha/2} d/dz_j.
    With T-eigenvalues lambda_j^{(alpha+delta)/2}, |x|_- and |x|_+ of a rigged vector are the
    H_{-delta} and H_{delta+2 alpha} norms of the field.
    '''
    lambdas: np.ndarray
    alpha_idx: float
    delta_idx: float

    @property
    def t_eigenvalues(self) -> np.ndarray:
        return self.lambdas ** ((self.alpha_idx + self.delta_idx) / 2.0)

    def basis(self) -> RiggedBasis:
        return RiggedBasis(self.t_eigenvalues, name=f"H_alpha rigging (alpha={self.alpha_idx:g}, delta={self.delta_idx:g})")

    def to_rigged(self, field_coeffs):
        return np.asarray(field_coeffs) * self.lambdas ** (self.alpha_idx / 2.0)

    def from_rigged(self, rigged):
        return np.asarray(rigged) * self.lambdas ** (-self.alpha_idx / 2.0)

    @property
    def derivative_scale(self) -> np.ndarray:
        return self.lambdas ** (-self.alpha_idx / 2.0)

    @property
    def delta_factor(self) -> np.ndarray:
        """delta(z) = sum_j delta_factor_j z_j e_j; also the diagonal of the rigged delta-Jacobian."""
        return -self.lambdas ** (1.0 - self.alpha_idx)

    @property
    def alpha_factor(self) -> np.ndarray:
        """alpha(z) = sum_j alpha_factor_j S_j(z) e_j with S_j = sum_n n a_n :z^{n-1}:(e_j)."""
        return -self.lambdas ** (-self.alpha_idx)

    @property
    def rigged_variances(self) -> np.ndarray:
        """Variance of x_j under the free field."""
        return self.lambdas ** (self.alpha_idx - 1.0)


def _check_pairing(sample: FieldSample, modes: ModeBasis):
    if sample.K != len(modes):
        raise DimensionError(f"sample with {sample.K} coefficients paired with {len(modes)} modes")


def _test_values(h, modes: ModeBasis, rule, table) -> np.ndarray:
    if h is None or (isinstance(h, str) and h in ("1", "indicator")):
        return np.ones(len(rule))
    if isinstance(h, (int, np.integer)):
        if not 1 <= h <= len(modes):
            raise DimensionError(f"mode index {h} outside 1..{len(modes)}")
        return table[h - 1]
    if callable(h):
        return np.asarray(h(rule.nodes[:, 0], rule.nodes[:, 1]), dtype=float)
    values = np.asarray(h, dtype=float)
    if values.shape != (len(rule),):
        raise DimensionError(f"test function values of shape {values.shape} do not match {len(rule)} quadrature nodes")
    return values


def _wick_stack(sample: FieldSample, modes: ModeBasis, nmax: int, order: Optional[int]):
    rule, table = modes.quadrature(order)
    fields = sample.batch() @ table
    variances = np.sum(table ** 2 / modes.eigenvalues[:, None], axis=0)
    return rule, table, wick_powers(fields, variances, nmax)


def wick_integral(sample: FieldSample, modes: ModeBasis, h=None, n: int = 1, order: Optional[int] = None):
    r'''
    :z^n:(h) = int :z^n:(x) h(x) dx by Gauss-Legendre quadrature.

    `h` is None / "1" for the indicator of the rectangle, a 1-based mode index j for e_j, a callable
    h(x, y), or an array of values at the quadrature nodes.
    '''
    assert n >= 0, f"Wick degree must be non-negative, got {n}"
    _check_pairing(sample, modes)
    order = order or modes.default_quadrature_order(max(n + 1, 2))
    rule, table, stack = _wick_stack(sample, modes, n, order)
    values = stack[n] @ (_test_values(h, modes, rule, table) * rule.weights)
    return values if sample.is_batch else float(values[0])


def _interaction_and_gradient(sample: FieldSample, spec: WickSpec, modes: ModeBasis, order: Optional[int] = None):
    """V(z) per sample and S_j(z) = dV/dz_j = sum_n n a_n :z^{n-1}:(e_j)."""
    _check_pairing(sample, modes)
    count = len(sample)
    if spec.is_free:
        return np.zeros(count), np.zeros((count, len(modes)))
    degree = spec.degree
    order = order or modes.default_quadrature_order(max(degree, 2))
    rule, table, stack = _wick_stack(sample, modes, degree, order)
    potential = np.zeros(count)
    gradient = np.zeros((count, len(modes)))
    weighted_table = (table * rule.weights).T
    for n in range(degree + 1):
        a = spec.coefficients[n]
        if a == 0.0:
            continue
        potential += a * (stack[n] @ rule.weights)
        if n >= 1:
            gradient += n * a * (stack[n - 1] @ weighted_table)
    return potential, gradient


def interaction(sample: FieldSample, spec: WickSpec, modes: ModeBasis, order: Optional[int] = None):
    potential, _ = _interaction_and_gradient(sample, spec, modes, order)
    return potential if sample.is_batch else float(potential[0])


def log_density_phi2(sample: FieldSample, spec: WickSpec, modes: ModeBasis, order: Optional[int] = None):
    """log phi^2 = -V, the importance log-weight of nu against mu."""
    return -interaction(sample, spec, modes, order)


def density_phi(sample: FieldSample, spec: WickSpec, modes: ModeBasis, order: Optional[int] = None):
    return np.exp(0.5 * log_density_phi2(sample, spec, modes, order))


def _single(sample: FieldSample, values):
    return values if sample.is_batch else values[0]


def drift_delta(sample: FieldSample, spec: WickSpec, modes: ModeBasis):
    """Coefficients against e_j of the Gaussian part delta(z): -lambda_j^{1-alpha} z_j."""
    _check_pairing(sample, modes)
    return _single(sample, sample.batch() * spec.bookkeeping(modes).delta_factor)


def drift_alpha(sample: FieldSample, spec: WickSpec, modes: ModeBasis, order: Optional[int] = None):
    """Coefficients against e_j of the interaction part alpha(z): -lambda_j^{-alpha} S_j(z)."""
    _, gradient = _interaction_and_gradient(sample, spec, modes, order)
    return _single(sample, gradient * spec.bookkeeping(modes).alpha_factor)


def drift_beta(sample: FieldSample, spec: WickSpec, modes: ModeBasis, order: Optional[int] = None):
    r'''
    beta = alpha + delta in rigged coordinates:

        beta_j = -lambda_j^{1-alpha/2} z_j - lambda_j^{-alpha/2} sum_n n a_n :z^{n-1}:(e_j)
    '''
    bookkeeping = spec.bookkeeping(modes)
    field_coeffs = drift_alpha(sample, spec, modes, order) + drift_delta(sample, spec, modes)
    return bookkeeping.to_rigged(field_coeffs)


def quadrature_stability(sample: FieldSample, spec: WickSpec, modes: ModeBasis, order: Optional[int] = None,
                         rtol: float = STABLE_QUADRATURE_RTOL) -> Dict[str, Any]:
    """Compare V at quadrature orders q and 2q; an unstable pair is an estimate-stability failure."""
    order = order or modes.default_quadrature_order(max(spec.degree, 2))
    coarse = np.atleast_1d(interaction(sample, spec, modes, order))
    fine = np.atleast_1d(interaction(sample, spec, modes, 2 * order))
    scale = max(1.0, float(np.max(np.abs(fine))))
    deviation = float(np.max(np.abs(coarse - fine))) / scale
    stable = deviation <= rtol
    if not stable:
        logger.warning(f"Wick integrals move by {deviation:.3e} between quadrature orders {order} and {2 * order}")
    return {"order": order, "refined_order": 2 * order, "relative_deviation": deviation, "stable": stable}


@dataclass
class WeightedSampleSet:
    r'''
    Free-field samples with self-normalized importance weights phi^2 = exp(-V).

    `coordinates` are the rigged coordinates x_j (cylinder functions act on them) and `beta`
    the rigged drift at each sample.
    '''
    samples: FieldSample
    log_weights: np.ndarray
    seed: int
    coordinates: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    ess_floor: float = 0.0

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if self.log_weights.size != len(self.samples):
            raise DimensionError(f"{self.log_weights.size} log-weights for {len(self.samples)} samples")
        if self.coordinates is None:
            self.coordinates = self.samples.batch()
        if self.coordinates.shape[0] != len(self.samples):
            raise DimensionError("coordinates and samples disagree in count")
        if self.beta is not None and self.beta.shape != self.coordinates.shape:
            raise DimensionError(f"drift of shape {self.beta.shape} for coordinates of shape {self.coordinates.shape}")

    def __len__(self):
        return self.log_weights.size

    @property
    def dimension(self) -> int:
        return self.coordinates.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def ess(self) -> float:
        return float(np.exp(2.0 * logsumexp(self.log_weights) - logsumexp(2.0 * self.log_weights)))

    @property
    def ess_fraction(self) -> float:
        return self.ess / len(self)

    @property
    def degenerate(self) -> bool:
        return self.ess_fraction < self.ess_floor

    def expectation(self, values) -> Tuple[float, float]:
        """Self-normalized estimate of E_nu[values] and its delta-method standard error."""
        values = np.asarray(values, dtype=float).reshape(-1)
        assert values.size == len(self), f"{values.size} values for {len(self)} samples"
        weights = self.weights
        mean = float(weights @ values)
        stderr = float(np.sqrt(np.sum(weights ** 2 * (values - mean) ** 2)))
        return mean, stderr

    def norm(self, values, p: float) -> Tuple[float, float]:
        """(E_nu|values|^p)^{1/p} with a propagated standard error."""
        moment, stderr = self.expectation(np.abs(values) ** p)
        if moment <= 0:
            return 0.0, 0.0
        value = moment ** (1.0 / p)
        return value, stderr * value / (p * moment)


def _sample_batch(args):
    spec, modes, generator, size, order = args
    sample = sample_free_field(modes, generator, size)
    potential, gradient = _interaction_and_gradient(sample, spec, modes, order)
    return sample.coeffs, potential, gradient


def sample_nu(spec: WickSpec, modes: ModeBasis, count: int, seed: int, batch_size: int = 1000, ess_floor: float = 0.2,
              threads: int = 1, order: Optional[int] = None, progress: bool = False) -> WeightedSampleSet:
    """
    Draw `count` free-field samples in seeded batches and weight them by phi^2.

    Batch b always uses the b-th child stream of `seed`, so results do not depend on `threads`.
    """
    if count < 1:
        raise ConfigurationError(f"sample count must be positive, got {count}", key="num_samples")
    if spec.K != len(modes):
        raise DimensionError(f"WickSpec truncation {spec.K} paired with {len(modes)} modes")
    sizes = [min(batch_size, count - start) for start in range(0, count, batch_size)]
    generators = spawn_generators(seed, len(sizes))
    jobs = [(spec, modes, generator, size, order) for generator, size in zip(generators, sizes)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(tqdm(pool.map(_sample_batch, jobs), total=len(jobs), desc="sampling nu", disable=not progress))

    coeffs = np.concatenate([r[0] for r in results])
    potential = np.concatenate([r[1] for r in results])
    gradient = np.concatenate([r[2] for r in results])
    bookkeeping = spec.bookkeeping(modes)
    beta_field = gradient * bookkeeping.alpha_factor + coeffs * bookkeeping.delta_factor
    sample_set = WeightedSampleSet(
        samples=FieldSample(coeffs),
        log_weights=-potential,
        seed=seed,
        coordinates=bookkeeping.to_rigged(coeffs),
        beta=bookkeeping.to_rigged(beta_field),
        ess_floor=ess_floor,
    )
    logger.info(f"Sampled nu: count={count}, K={len(modes)}, ESS={sample_set.ess:.1f} ({sample_set.ess_fraction:.3f})")
    if sample_set.degenerate:
        logger.warning(f"Degenerate importance weights: ESS fraction {sample_set.ess_fraction:.3f} below floor {ess_floor}")
    return sample_set


def _gaussian_moment(p: int, variance: float) -> float:
    if p < 0 or p % 2:
        return 0.0
    double_factorial = float(np.prod(np.arange(p - 1, 0, -2))) if p > 1 else 1.0
    return double_factorial * variance ** (p // 2)


def check_ibp(spec: WickSpec, modes: ModeBasis, f, j: int, sample_set: WeightedSampleSet, sigma: float = 4.0) -> ResidualReport:
    r'''
    Integration by parts  E_nu[grad_j f] = -E_nu[beta_j f]  for a cylinder function f of the rigged
    coordinates.  `j` is a 1-based direction.  The residual E_nu[grad_j f + beta_j f] is estimated
    per sample, so its standard error accounts for the correlation of both sides.
    '''
    if not 1 <= j <= sample_set.dimension:
        raise DimensionError(f"direction {j} outside 1..{sample_set.dimension}")
    if f.dimension > sample_set.dimension:
        raise DimensionError(f"cylinder function of dimension {f.dimension} on samples of dimension {sample_set.dimension}")
    if sample_set.beta is None:
        raise ConfigurationError("sample set carries no drift; draw it with sample_nu", key="sample_set")
    x = sample_set.coordinates[:, :f.dimension]
    value = f.value(x)
    gradient = f.gradient(x)[:, j - 1] if j <= f.dimension else np.zeros(len(sample_set))
    beta_j = sample_set.beta[:, j - 1]

    lhs = sample_set.expectation(gradient)
    rhs = sample_set.expectation(-beta_j * value)
    residual = sample_set.expectation(gradient + beta_j * value)
    details: Dict[str, Any] = {"direction": j, "function": getattr(f, "name", "f"), "count": len(sample_set)}

    monomial = getattr(f, "monomial", None)
    if spec.is_free and monomial is not None:
        index, power = monomial
        variance = float(spec.bookkeeping(modes).rigged_variances[j - 1])
        if index == j:
            exact_lhs = power * _gaussian_moment(power - 1, variance)
            exact_rhs = _gaussian_moment(power + 1, variance) / variance
        else:
            exact_lhs = exact_rhs = 0.0
        details["analytic"] = {
            "lhs": exact_lhs,
            "rhs": exact_rhs,
            "status": PASS if abs(exact_lhs - exact_rhs) <= 1e-12 * max(1.0, abs(exact_lhs)) else FAIL,
        }

    return ResidualReport(
        name=f"ibp[j={j}]",
        estimates={"lhs": lhs, "rhs": rhs},
        residuals={"lhs_minus_rhs": residual},
        sigma=sigma,
        degenerate=sample_set.degenerate,
        ess=sample_set.ess,
        details=details,
    )


def delta_tail_norms(spec: WickSpec, modes: ModeBasis, sample_set: WeightedSampleSet, schedule: Sequence[int]):
    """|| |delta - delta^m|_- ||_{L^2(nu)} for each m, with delta^m the first m coordinates of delta."""
    bookkeeping = spec.bookkeeping(modes)
    rigged_delta = sample_set.coordinates * bookkeeping.delta_factor
    squared = (rigged_delta / bookkeeping.t_eigenvalues) ** 2
    tails = np.cumsum(squared[:, ::-1], axis=1)[:, ::-1]
    rows = []
    for m in schedule:
        tail = tails[:, m] if m < len(modes) else np.zeros(len(sample_set))
        moment, stderr = sample_set.expectation(tail)
        value = float(np.sqrt(moment))
        rows.append({"m": int(m), "value": value, "stderr": stderr / (2.0 * value) if value > 0 else 0.0})
    return rows


def check_theorem1_conditions(spec: WickSpec, modes: ModeBasis, sample_set: Optional[WeightedSampleSet] = None,
                              schedule: Sequence[int] = (2, 4, 8, 16), count: int = 20000, seed: int = 0) -> ConditionReport:
    """Computed versions of the hypotheses (i)-(iv) for the P(phi)_2 drift at truncation K."""
    if sample_set is None:
        sample_set = sample_nu(spec, modes, count, seed)
    bookkeeping = spec.bookkeeping(modes)
    weights = bookkeeping.t_eigenvalues
    diagonal = bookkeeping.delta_factor
    c_plus = symmetrized_plus_bound(np.diag(diagonal), weights)
    notes = []

    schedule = sorted({int(m) for m in schedule if 1 <= m <= len(modes)})
    if not schedule:
        raise ConfigurationError(f"no delta^m level of {schedule} fits K={len(modes)}", key="drift_schedule")
    tails = delta_tail_norms(spec, modes, sample_set, schedule + [len(modes)])
    partial = [row["value"] for row in tails if row["m"] < len(modes)]
    decreasing = bool(np.all(np.diff(partial) < 0)) if len(partial) > 1 else True
    full_tail = tails[-1]["value"]

    rigged_delta = sample_set.coordinates * diagonal
    integrability = {
        "delta_minus_L2": sample_set.norm(np.linalg.norm(rigged_delta / weights, axis=1), 2.0),
        "delta_minus_L1": sample_set.norm(np.linalg.norm(rigged_delta / weights, axis=1), 1.0),
    }
    if sample_set.beta is not None:
        alpha_norm = np.linalg.norm(sample_set.beta - rigged_delta, axis=1)
        integrability["alpha_zero_L4"] = sample_set.norm(alpha_norm, 4.0)
        integrability["alpha_zero_L2"] = sample_set.norm(alpha_norm, 2.0)

    eps0 = 1.0
    c_eps0 = max(0.0, float(np.max(diagonal)))
    if c_eps0 > 0:
        notes.append("delta-Jacobian has a positive diagonal entry; c(eps0) > 0 at eps0 = 1")

    finite = all(np.isfinite(v[0]) for v in integrability.values())
    if sample_set.degenerate:
        status = INCONCLUSIVE
    elif c_plus <= 0 and decreasing and full_tail == 0.0 and finite:
        status = PASS
    else:
        status = FAIL
    items = {
        "K": len(modes),
        "alpha_idx": spec.alpha_idx,
        "delta_idx": spec.delta_idx,
        "delta_jacobian_diagonal": diagonal,
        "quadratic_form_at_basis": diagonal * weights ** 2,
        "c_plus": c_plus,
        "c_plus_zero_admissible": bool(c_plus <= 0),
        "delta_tail_L2": tails,
        "delta_tail_strictly_decreasing": decreasing,
        "integrability": {k: {"value": v, "stderr": s} for k, (v, s) in integrability.items()},
        "eps0": eps0,
        "c_eps0": c_eps0,
        "ess": sample_set.ess,
    }
    return ConditionReport("theorem1_conditions", items, status=status, notes=notes)


def check_alpha_refinement(spec: WickSpec, domain: RectangleDomain, count: int, seed: int, sigma: float = 4.0,
                           **sampling) -> ResidualReport:
    """|| |alpha|_0 ||_{L^4(nu)} at truncation K against 2K, drawn from independent streams."""
    estimates = {}
    for offset, K in enumerate((spec.K, 2 * spec.K)):
        modes = build_modes(domain, K)
        refined = WickSpec(spec.coefficients, K, spec.alpha_idx, spec.delta_idx, spec.check_invariants)
        sample_set = sample_nu(refined, modes, count, seed + offset, **sampling)
        rigged_alpha = sample_set.beta - sample_set.coordinates * refined.bookkeeping(modes).delta_factor
        estimates[f"K={K}"] = sample_set.norm(np.linalg.norm(rigged_alpha, axis=1), 4.0)
    (coarse, coarse_se), (fine, fine_se) = estimates.values()
    return ResidualReport(
        name="alpha_L4_refinement",
        estimates=estimates,
        residuals={"difference": (fine - coarse, float(np.hypot(coarse_se, fine_se)))},
        sigma=sigma,
    )
