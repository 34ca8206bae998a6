import logging
from enum import Enum
from typing import Callable, Dict, List, Sequence

import numpy as np
import sympy as sp

from model.dirichlet_form import (
    CylinderFunction,
    constant_function,
    coordinate_bump,
    coordinate_monomial,
    coordinate_product,
    gaussian_bump_function,
)
from model.errors import ConfigurationError
from model.p_phi2 import WickSpec
from model.parabolic_solver import (
    DriftFieldFD,
    Grid,
    constant_drift,
    gaussian_bump,
    linear_drift,
    zero_drift,
)
from model.rigged_space import RiggedBasis
from validation.apriori_checks import ParabolicProblem, ReferenceMeasureFD, anharmonic_measure, gaussian_measure
from validation.duhamel import ApproximationLadder, exact_ladder, linear_gaussian_ladder, tanh_ladder

logger = logging.getLogger(__name__)


class PresetType(Enum):
    DRIFT = "drift"
    INITIAL = "initial"
    FUNCTION = "function"
    MEASURE = "measure"
    LADDER = "ladder"
    WICK = "coefficients"
    BASIS = "basis"


def rotation_drift(d: int, speed: float = 1.0) -> DriftFieldFD:
    """Divergence-free rotation in the (x1, x2) plane."""
    if d < 2:
        raise ConfigurationError("the rotation drift needs dimension >= 2", key="drift")
    A = np.zeros((d, d))
    A[0, 1], A[1, 0] = -speed, speed
    return linear_drift(A, name="rotation")


DRIFT_PRESETS: Dict[str, Callable[[int], DriftFieldFD]] = {
    "zero": lambda d: zero_drift(),
    "ou": lambda d: linear_drift(-np.eye(d), name="ou"),
    "rotation": rotation_drift,
    "ou-rotation": lambda d: linear_drift(-np.eye(d), name="ou") + rotation_drift(d),
    "constant": lambda d: constant_drift(np.full(d, 0.5)),
}

# "matching" is resolved against the measure: b = beta
MATCHING_DRIFT = "matching"

INITIAL_PRESETS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "bump": lambda x: gaussian_bump(x, width=0.7),
    "wide-bump": lambda x: gaussian_bump(x, width=1.0),
    "offset-bump": lambda x: gaussian_bump(x, width=0.7, center=np.r_[0.5, np.zeros(x.shape[0] - 1)]),
}

FUNCTION_PRESETS: Dict[str, Callable[[int], CylinderFunction]] = {
    "const": lambda d: constant_function(1.0, d),
    "x1": lambda d: coordinate_monomial(1, 1),
    "x1^2": lambda d: coordinate_monomial(1, 2),
    "x1^3": lambda d: coordinate_monomial(1, 3),
    "x1x2": lambda d: coordinate_product(1, 2),
    "bump1": lambda d: coordinate_bump(1, width=1.0),
    "bump2": lambda d: coordinate_bump(2, width=1.0),
    "bump": lambda d: gaussian_bump_function(d, width=1.0),
}

MEASURE_PRESETS: Dict[str, Callable[[int], ReferenceMeasureFD]] = {
    "gaussian": lambda d: gaussian_measure(np.ones(d), split="delta"),
    "gaussian-alpha": lambda d: gaussian_measure(np.ones(d), split="alpha"),
    "gaussian-half": lambda d: gaussian_measure(np.ones(d), split="half"),
    "gaussian-narrow": lambda d: gaussian_measure(np.full(d, 0.5), split="delta"),
    "anharmonic": lambda d: anharmonic_measure(d, coupling=0.1),
}

LADDER_PRESETS: Dict[str, Callable[[int], ApproximationLadder]] = {
    "exact": lambda D: exact_ladder(D),
    "linear-gaussian": lambda D: linear_gaussian_ladder(D),
    "tanh": lambda D: tanh_ladder(D, strength=0.5),
}

WICK_PRESETS: Dict[str, str] = {
    "free": "0",
    "quartic": "0,0,0,0,0.1",
    "mass-quartic": "0,0,0.05,0,0.1",
}

BASIS_PRESETS: Dict[str, str] = {
    "unit": "power:0",
    "linear": "power:1",
    "heavy-tail": "power:0.51",
}


EXPRESSION_PREFIX = "expr:"


def _coordinates(d: int) -> Sequence[sp.Symbol]:
    return sp.symbols(f"x0:{d}", real=True)


def parse_expressions(text: str, d: int, key: str) -> List[sp.Expr]:
    r'''
    Comma-separated sympy expressions in the coordinates x0, ..., x{d-1}, e.g. ``-x0,-2*x1``
    or ``exp(-x0**2)``.  Any other free symbol is a configuration error.
    '''
    symbols = _coordinates(d)
    try:
        parsed = sp.sympify(text, locals={s.name: s for s in symbols})
        parsed = list(parsed) if isinstance(parsed, (tuple, list, sp.Tuple)) else [parsed]
        components = [sp.sympify(c) for c in parsed]
    except (sp.SympifyError, SyntaxError, TypeError, AttributeError, ValueError) as e:
        raise ConfigurationError(f"cannot parse {key} expression {text!r}: {e}", key=key)
    if not components or not all(isinstance(c, sp.Expr) for c in components):
        raise ConfigurationError(f"{key} expression {text!r} is not a list of scalar expressions", key=key)
    unknown = set().union(*(c.free_symbols for c in components)) - set(symbols)
    if unknown:
        names = ", ".join(sorted(str(s) for s in unknown))
        raise ConfigurationError(f"{key} expression {text!r} uses {names}; only x0..x{d - 1} are defined", key=key)
    return components


def _vectorized(symbols, components: List[sp.Expr]) -> Callable[[np.ndarray], np.ndarray]:
    """numpy evaluator of `components` at points (d,) + S, returning (len(components),) + S."""
    fn = sp.lambdify(symbols, components, "numpy")

    def evaluate(points):
        points = np.asarray(points, dtype=float)
        values = fn(*points)
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), points.shape[1:]) for v in values])

    return evaluate


def expression_drift(text: str, d: int) -> DriftFieldFD:
    """Drift b = (b_1, ..., b_d) from ``b_1,...,b_d``; the Jacobian is differentiated symbolically."""
    components = parse_expressions(text, d, PresetType.DRIFT.value)
    if len(components) != d:
        raise ConfigurationError(f"drift expression {text!r} has {len(components)} components, expected {d}",
                                 key=PresetType.DRIFT.value)
    symbols = _coordinates(d)
    jacobian = _vectorized(symbols, [sp.diff(b_j, x_i) for x_i in symbols for b_j in components])
    return DriftFieldFD(
        name=f"{EXPRESSION_PREFIX}{text}",
        drift=_vectorized(symbols, components),
        jacobian=lambda x: jacobian(x).reshape((d, d) + np.shape(x)[1:]),
    )


def expression_initial(text: str, d: int) -> Callable[[np.ndarray], np.ndarray]:
    components = parse_expressions(text, d, PresetType.INITIAL.value)
    if len(components) != 1:
        raise ConfigurationError(f"initial expression {text!r} must be a single scalar", key=PresetType.INITIAL.value)
    evaluate = _vectorized(_coordinates(d), components)
    return lambda x: evaluate(x)[0]


def _lookup(registry: Dict, name: str, preset_type: PresetType):
    if name not in registry:
        raise ConfigurationError(
            f"unknown {preset_type.value} preset {name!r}; choose from: {', '.join(sorted(registry))}",
            key=preset_type.value,
        )
    return registry[name]


def get_drift(name: str, d: int, measure: ReferenceMeasureFD = None) -> DriftFieldFD:
    if name.startswith(EXPRESSION_PREFIX):
        return expression_drift(name[len(EXPRESSION_PREFIX):], d)
    if name == MATCHING_DRIFT:
        if measure is None:
            raise ConfigurationError("the matching drift needs a reference measure", key="drift")
        return measure.beta
    return _lookup(DRIFT_PRESETS, name, PresetType.DRIFT)(d)


def get_initial(name: str, d: int) -> Callable[[np.ndarray], np.ndarray]:
    if name.startswith(EXPRESSION_PREFIX):
        return expression_initial(name[len(EXPRESSION_PREFIX):], d)
    return _lookup(INITIAL_PRESETS, name, PresetType.INITIAL)


def get_function(name: str, d: int = 1) -> CylinderFunction:
    return _lookup(FUNCTION_PRESETS, name, PresetType.FUNCTION)(d)


def get_measure(name: str, d: int) -> ReferenceMeasureFD:
    return _lookup(MEASURE_PRESETS, name, PresetType.MEASURE)(d)


def get_ladder(name: str, D: int) -> ApproximationLadder:
    return _lookup(LADDER_PRESETS, name, PresetType.LADDER)(D)


def get_wick_spec(coefficients: str, K: int, alpha_idx: float, delta_idx: float) -> WickSpec:
    """`coefficients` is a preset name or an explicit comma list a_0,a_1,..."""
    text = WICK_PRESETS.get(coefficients, coefficients)
    return WickSpec.from_string(text, K=K, alpha_idx=alpha_idx, delta_idx=delta_idx)


def get_basis(name: str, dimension: int) -> RiggedBasis:
    """A preset name, ``power:p`` or an explicit eigenvalue list."""
    spec = BASIS_PRESETS.get(name, name)
    if spec == "power:0":
        return RiggedBasis(np.ones(dimension), name="unit")
    return RiggedBasis.from_spec(spec, dimension)


def parse_floats(text: str, key: str) -> List[float]:
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse {text!r} as a list of numbers", key=key)


def get_grid(grid_args) -> Grid:
    return Grid(grid_args.dimension, grid_args.radius, grid_args.points, grid_args.safety_factor, grid_args.dt)


def get_problem(grid_args) -> ParabolicProblem:
    """The drift, datum, measure and weights named by the grid arguments."""
    d = grid_args.dimension
    measure = get_measure(grid_args.measure, d)
    times = parse_floats(grid_args.snapshot_times, "snapshot_times") if grid_args.snapshot_times else None
    return ParabolicProblem(
        drift=get_drift(grid_args.drift, d, measure),
        initial=get_initial(grid_args.initial, d),
        grid=get_grid(grid_args),
        final_time=grid_args.final_time,
        weights=get_basis(grid_args.basis, d).lambdas,
        measure=measure,
        times=times,
        n_snapshots=grid_args.n_snapshots,
    )
