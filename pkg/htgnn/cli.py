"""
Command-line entry point.

    htgnn <command> [--config FILE] [--set section.key=value ...] [--out DIR]

Commands: synth, embed, train, eval, gradcheck, bench. Exit codes: 0 on
success, 1 on usage or configuration errors, 2 on runtime failures (including
a gradient check above the configured threshold).
"""

import os

# BLAS pools read these once, at numpy import; an exported value wins
PINNED_THREADS = "1"
THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "VECLIB_MAXIMUM_THREADS",
                    "NUMEXPR_NUM_THREADS")
for _name in THREAD_VARIABLES:
    os.environ.setdefault(_name, PINNED_THREADS)

import argparse  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from typing import List, Optional, Sequence  # noqa: E402

from pydantic import ValidationError  # noqa: E402

from htgnn.config import RunConfig, load_config  # noqa: E402
from htgnn.errors import ConfigError, HTGError  # noqa: E402
from htgnn.services.pipeline import ExperimentPipeline  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
COMMANDS = ("synth", "embed", "train", "eval", "gradcheck", "bench")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class UsageError(Exception):
    pass


class CommandParser(argparse.ArgumentParser):
    """Reports usage errors with exit code 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def build_parser() -> CommandParser:
    parser = CommandParser(prog="htgnn", description="Heterogeneous temporal graph learning experiments")
    commands = parser.add_subparsers(dest="command", metavar="command", parser_class=CommandParser)
    commands.required = True

    helps = {
        "synth": "generate the configured synthetic dataset into <out>/dataset",
        "embed": "compute the node-type embedding table",
        "train": "train a model and write the report, checkpoint and curves",
        "eval": "recompute validation and test metrics from a checkpoint",
        "gradcheck": "compare analytic and numeric gradients per parameter group",
        "bench": "measure per-epoch wall clock over the benchmark grid",
    }
    for name in COMMANDS:
        sub = commands.add_parser(name, help=helps[name])
        sub.add_argument("--config", help="JSON run configuration")
        sub.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                         help="override a configuration value, e.g. optimizer.lr=0.005")
        sub.add_argument("--out", help="output directory (overrides output_dir)")
        sub.add_argument("--verbose", action="store_true", help="debug-level logging")
        if name == "eval":
            sub.add_argument("--checkpoint", help="checkpoint to evaluate (default <out>/checkpoint.bin)")
    return parser


def configure_logging(out_dir: str, verbose: bool = False):
    log_dir = os.path.join(out_dir, "logs")
    os.makedirs(log_dir, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(os.path.join(log_dir, "run.log")),
            logging.StreamHandler(),
        ],
        force=True,
    )


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config, args.overrides)
    if args.out:
        config = config.model_copy(update={"output_dir": args.out})
    return config


def _print_gradcheck(errors, threshold: float) -> bool:
    width = max((len(name) for name in errors), default=5)
    print(f"{'group'.ljust(width)}  max relative error")
    passed = True
    for name, error in errors.items():
        flag = "" if error < threshold else "  FAIL"
        passed = passed and error < threshold
        print(f"{name.ljust(width)}  {error:.3e}{flag}")
    return passed


def _dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    pipeline = ExperimentPipeline(config)
    if args.command == "synth":
        print(pipeline.synth())
    elif args.command == "embed":
        print(pipeline.embed())
    elif args.command == "train":
        report = pipeline.train()
        print(f"best epoch {report.best_epoch} of {len(report.epochs)}; test {report.test_metrics}")
    elif args.command == "eval":
        checkpoint = args.checkpoint or pipeline.artifact("checkpoint")
        metrics = pipeline.evaluate(checkpoint)
        print(f"val {metrics['val']}; test {metrics['test']}")
    elif args.command == "gradcheck":
        threshold = config.training.gradcheck_threshold
        if not _print_gradcheck(pipeline.gradcheck(), threshold):
            logger.error(f"Gradient check exceeded threshold {threshold}")
            return EXIT_RUNTIME
    elif args.command == "bench":
        result = pipeline.bench()
        for kind, exponents in result.exponents.items():
            print(f"{kind}: " + ", ".join(f"{axis}-exponent {value:.3f}" for axis, value in exponents.items()))
    return EXIT_OK


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except UsageError:
        return EXIT_USAGE

    try:
        config = _resolve_config(args)
    except ConfigError as e:
        sys.stderr.write(f"configuration error: {e}\n")
        return EXIT_USAGE
    except ValidationError as e:
        sys.stderr.write(f"configuration error:\n{e}\n")
        return EXIT_USAGE

    configure_logging(config.output_dir, args.verbose)
    logger.info(f"Running '{args.command}' with output directory {config.output_dir}")
    try:
        return _dispatch(args, config)
    except (ConfigError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except HTGError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Unexpected {type(e).__name__} in '{args.command}': {e}", exc_info=True)
        return EXIT_RUNTIME


def main(argv: Optional[List[str]] = None):
    sys.exit(run_command(argv))
