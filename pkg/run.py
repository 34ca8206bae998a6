import os
import sys


def _thread_cap(argv):
    for i, token in enumerate(argv):
        if token == "--threads" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--threads="):
            return token.split("=", 1)[1]
    return "1"


# BLAS pools are sized before numpy loads; config-file values only reach the Python thread pools
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, _thread_cap(sys.argv))

import logging

import transformers
from transformers import set_seed

from arguments import get_args
from model.errors import ConfigurationError, NumericalAbort
from runner.runner_base import EXIT_CODES, EXIT_CONFIGURATION, EXIT_NUMERICAL_ABORT
from tasks.utils import *

logger = logging.getLogger(__name__)


def evaluate(runner) -> int:
    status = runner.evaluate()
    logger.info(f"Experiment {runner.experiment} finished with status {status}")
    return EXIT_CODES[status]


def main(argv=None) -> int:
    logging.basicConfig(
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
        datefmt="%m/%d/%Y %H:%M:%S",
        handlers=[logging.StreamHandler(sys.stdout)],
    )

    try:
        args = get_args(argv)
    except ConfigurationError as e:
        logger.error(f"Configuration error ({e.key}): {e}")
        return EXIT_CONFIGURATION

    experiment_args = args[0]
    log_level = logging.getLevelName(experiment_args.log_level.upper())
    logging.getLogger().setLevel(log_level)
    transformers.utils.logging.set_verbosity(log_level)
    transformers.utils.logging.enable_default_handler()
    transformers.utils.logging.enable_explicit_format()

    logger.info(f"Experiment parameters {args}")

    task_name = EXPERIMENT_TASK[experiment_args.experiment]
    if task_name == "spectral":
        from tasks.spectral.get_runner import get_runner

    elif task_name == "pphi2":
        from tasks.pphi2.get_runner import get_runner

    elif task_name == "apriori":
        from tasks.apriori.get_runner import get_runner

    elif task_name == "duhamel":
        from tasks.duhamel.get_runner import get_runner

    elif task_name == "markov":
        from tasks.markov.get_runner import get_runner

    else:
        raise NotImplementedError('Task {} is not implemented. Please choose a task from: {}'.format(task_name, ", ".join(TASKS)))

    set_seed(experiment_args.seed)

    runner = None
    try:
        runner = get_runner(args)
        return evaluate(runner)
    except ConfigurationError as e:
        logger.error(f"Configuration error ({e.key}): {e}")
        return EXIT_CONFIGURATION
    except NumericalAbort as e:
        logger.error(f"Numerical abort: {e}; diagnostic {e.diagnostic}")
        if runner is not None:
            runner.save_manifest(status="aborted", exit_code=EXIT_NUMERICAL_ABORT, diagnostic=e.diagnostic)
        return EXIT_NUMERICAL_ABORT


if __name__ == '__main__':
    sys.exit(main())
