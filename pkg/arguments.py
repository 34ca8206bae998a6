import configparser
import dataclasses
import sys
from dataclasses import dataclass, field
from typing import List, Optional

from transformers import HfArgumentParser

from model.errors import ConfigurationError
from tasks.utils import *

LOG_LEVELS = ["debug", "info", "warning", "error", "critical"]

# short spellings accepted on the command line
ALIASES = {
    "--samples": "--num_samples",
    "--out_dir": "--out",
}


@dataclass
class ExperimentArguments:
    """
    Arguments pertaining to which experiment we run and where its reports go.

    Using `HfArgumentParser` we can turn this class
    into argparse arguments to be able to specify them on
    the command line.
    """

    experiment: str = field(
        metadata={
            "help": "The experiment to run: " + ", ".join(EXPERIMENTS),
            "choices": EXPERIMENTS
        },
    )
    config: Optional[str] = field(
        default=None, metadata={"help": "An INI file of flat key = value settings; command-line flags win."}
    )
    seed: int = field(
        default=0, metadata={"help": "Master seed; every random stream of the run is spawned from it."}
    )
    out: str = field(
        default="results", metadata={"help": "Output directory for the report JSON, manifest and CSV tables."}
    )
    threads: int = field(
        default=1,
        metadata={"help": "Worker threads for sampling batches and ladder rungs; results do not depend on it."},
    )
    budget_factor: float = field(
        default=2.0, metadata={"help": "Scale of the Richardson discretization budgets."}
    )
    log_level: str = field(
        default="info", metadata={"help": "Logging level.", "choices": LOG_LEVELS}
    )
    write_csv: bool = field(
        default=True, metadata={"help": "Whether to write the long-form CSV tables next to the JSON report."}
    )
    progress: bool = field(
        default=False, metadata={"help": "Show progress bars for sampling, time stepping and ladder sweeps."}
    )


@dataclass
class FieldArguments:
    """
    Arguments pertaining to the free field, its truncation and the Monte-Carlo estimators.
    """
    width: float = field(
        default=1.0, metadata={"help": "Side L1 of the rectangle."}
    )
    height: float = field(
        default=1.0, metadata={"help": "Side L2 of the rectangle."}
    )
    K: int = field(
        default=16, metadata={"help": "Number of Neumann modes kept."}
    )
    num_samples: int = field(
        default=100000, metadata={"help": "Monte-Carlo sample count."}
    )
    quadrature_order: Optional[int] = field(
        default=None,
        metadata={"help": "Gauss-Legendre order per axis for Wick integrals; default resolves the kept modes."},
    )
    batch_size: int = field(
        default=1000, metadata={"help": "Samples per seeded batch."}
    )
    ess_floor: float = field(
        default=0.2, metadata={"help": "ESS fraction below which weighted estimates are inconclusive."}
    )
    sigma: float = field(
        default=4.0, metadata={"help": "Standard errors allowed for Monte-Carlo residuals."}
    )
    wick_nmax: int = field(
        default=5, metadata={"help": "Largest Wick power in the orthogonality check."}
    )


@dataclass
class WickArguments:
    """
    Arguments pertaining to the interaction, the rigging and the integration by parts check.
    """
    coefficients: str = field(
        default="quartic",
        metadata={"help": "Wick preset (free, quartic, mass-quartic) or a comma list a_0,a_1,... of coefficients."},
    )
    alpha_idx: float = field(
        default=1.0, metadata={"help": "Rigging index alpha; alpha > max(0, 1 - delta/2)."}
    )
    delta_idx: float = field(
        default=1.0, metadata={"help": "Rigging index delta."}
    )
    drift_schedule: str = field(
        default="2,4,8,16", metadata={"help": "Truncation levels m of delta^m in the condition report."}
    )
    direction: int = field(
        default=1, metadata={"help": "1-based direction j of the integration by parts check."}
    )
    test_function: str = field(
        default="x1", metadata={"help": "Cylinder function preset used by the ibp and Dirichlet form checks."}
    )
    refine_K: bool = field(
        default=True, metadata={"help": "Compare the alpha L^4 norm at K and 2K in the condition report."}
    )


@dataclass
class GridArguments:
    """
    Arguments pertaining to the finite-dimensional parabolic problems.
    """
    dimension: int = field(
        default=2, metadata={"help": "Dimension d of the grid (1 to 3)."}
    )
    radius: float = field(
        default=6.0, metadata={"help": "Half-width R of the box [-R, R]^d."}
    )
    points: int = field(
        default=121, metadata={"help": "Grid points per axis."}
    )
    safety_factor: float = field(
        default=0.9, metadata={"help": "Fraction of the explicit stability bound used as time step."}
    )
    dt: Optional[float] = field(
        default=None, metadata={"help": "Fixed time step; must respect the stability bound."}
    )
    final_time: float = field(
        default=1.0, metadata={"help": "Final time T."}
    )
    snapshot_times: Optional[str] = field(
        default=None, metadata={"help": "Times in [0, T] stored in addition to the cadence; cadence only when unset."}
    )
    n_snapshots: int = field(
        default=32, metadata={"help": "Evenly spaced snapshots per run."}
    )
    drift: str = field(
        default="ou", metadata={"help": "Drift preset (zero, ou, rotation, ou-rotation, constant, matching) or expr:b_1,...,b_d in x0..x{d-1}."}
    )
    initial: str = field(
        default="bump", metadata={"help": "Initial datum preset or expr:f in x0..x{d-1}."}
    )
    basis: str = field(
        default="unit", metadata={"help": "Weights of the (.,.)_+ norms: a preset, power:p or an eigenvalue list."}
    )
    measure: str = field(
        default="gaussian", metadata={"help": "Reference measure preset and its alpha/delta split."}
    )
    refine: bool = field(
        default=False, metadata={"help": "Repeat on the grid with h/2 and attach Richardson budgets."}
    )
    check_permutations: bool = field(
        default=True, metadata={"help": "Re-run the estimate with relabelled coordinates."}
    )
    identity_p: float = field(
        default=4.0, metadata={"help": "Exponent p >= 2 of the L^p balance identity."}
    )
    oracle_rtol: float = field(
        default=1e-3, metadata={"help": "Relative sup-norm tolerance against the Mehler oracle."}
    )
    markov_tol: float = field(
        default=1e-6, metadata={"help": "Tolerance of the positivity, contraction and conservation checks."}
    )
    generator_rtol: float = field(
        default=1e-2, metadata={"help": "Relative tolerance of the generator limit check."}
    )
    markov_function: str = field(
        default="bump1", metadata={"help": "Second cylinder function of the Dirichlet form checks."}
    )


@dataclass
class LadderArguments:
    """
    Arguments pertaining to the approximation ladder and the coercivity constants.
    """
    ladder: str = field(
        default="linear-gaussian", metadata={"help": "Ladder preset: exact, linear-gaussian or tanh."}
    )
    schedule: str = field(
        default="0:0,0:1,0:2", metadata={"help": "Rungs n:m, sweeping m at fixed n before n advances."}
    )
    gamma: Optional[float] = field(
        default=None, metadata={"help": "Lower bound gamma of the reference generator; presets carry their own."}
    )
    eps0: float = field(
        default=1.0, metadata={"help": "Coercivity margin eps0 in (0, 1]."}
    )
    c_eps0: Optional[float] = field(
        default=None, metadata={"help": "Constant c(eps0); computed by the trial-field scan when unset."}
    )
    prop4_constant: Optional[float] = field(
        default=None, metadata={"help": "Constant C(eps0) of the L^4 bound; the empirical one is reported when unset."}
    )
    scan_points: int = field(
        default=20, metadata={"help": "Number of eps0 values in the interval monotonicity scan."}
    )
    lp_p: float = field(
        default=2.0, metadata={"help": "Exponent p whose integrability requirements are reported."}
    )


ARGUMENT_GROUPS = (ExperimentArguments, FieldArguments, WickArguments, GridArguments, LadderArguments)


def known_keys() -> List[str]:
    return [f.name for group in ARGUMENT_GROUPS for f in dataclasses.fields(group)]


def normalize_argv(argv: List[str]) -> List[str]:
    """`run <experiment>` -> `--experiment <experiment>`; dashed long flags -> underscores; aliases."""
    argv = list(argv)
    if argv and argv[0] == "run":
        if len(argv) < 2 or argv[1].startswith("-"):
            raise ConfigurationError("usage: run <experiment> [--flags]", key="experiment")
        argv = ["--experiment", argv[1]] + argv[2:]
    normalized = []
    for token in argv:
        if token.startswith("--"):
            flag, eq, value = token.partition("=")
            flag = "--" + flag[2:].replace("-", "_")
            flag = ALIASES.get(flag, flag)
            token = flag + eq + value
        normalized.append(token)
    return normalized


def config_tokens(path: str) -> List[str]:
    """Flatten an INI file into command-line tokens; sections only group keys."""
    parser = configparser.ConfigParser(default_section="__defaults__")
    parser.optionxform = str
    if not parser.read(path):
        raise ConfigurationError(f"cannot read config file {path}", key="config")
    keys = set(known_keys())
    tokens, seen = [], set()
    for section in parser.sections():
        for key, value in parser.items(section):
            name = key.replace("-", "_")
            name = ALIASES.get("--" + name, "--" + name)[2:]
            if name not in keys:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}] of {path}", key=key)
            if name in seen:
                raise ConfigurationError(f"key {key!r} appears twice in {path}", key=key)
            seen.add(name)
            tokens += [f"--{name}", value]
    return tokens


def _flag_value(argv: List[str], flag: str) -> Optional[str]:
    value = None
    for i, token in enumerate(argv):
        if token == flag and i + 1 < len(argv):
            value = argv[i + 1]
        elif token.startswith(flag + "="):
            value = token.split("=", 1)[1]
    return value


def get_args(argv: Optional[List[str]] = None):
    """Parse all the args."""
    argv = normalize_argv(sys.argv[1:] if argv is None else argv)
    experiment = _flag_value(argv, "--experiment")
    if experiment is not None and experiment not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {experiment!r}; choose from: {', '.join(EXPERIMENTS)}", key="experiment")
    path = _flag_value(argv, "--config")
    if path is not None:
        argv = config_tokens(path) + argv

    parser = HfArgumentParser(ARGUMENT_GROUPS)
    try:
        args = parser.parse_args_into_dataclasses(args=argv)
    except SystemExit as e:
        if e.code:
            raise ConfigurationError(f"invalid arguments: {' '.join(argv)}", key="argv")
        raise

    return args
