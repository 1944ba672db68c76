import argparse
import logging
import os
import sys
from typing import Optional

from dyadic_engine import __version__
from errors import NumericalError, ValidationError
from run_config import Scenario, load_config
from scenarios import run_scenario

# --- Logging Configuration ---
logging.basicConfig(
    level=os.getenv("DYADIC_LOG_LEVEL", "INFO").upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger("dyadic-lab")

EXIT_OK = 0
EXIT_UNHANDLED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

EPILOG = """\
Truncation guidance: N = 12 for horizons beyond t = 1, N up to 20 for t <= 0.1.
The default stepper (auto) is Radau for Galerkin runs at N >= 10 and RK45
otherwise; --set integrator.method=... picks one explicitly.
DYADIC_THREADS caps concurrent independent integrations (Galerkin ladders, scaling runs).
Exit codes: 0 success, 2 invalid input/configuration, 3 numerical failure
or exhausted step budget.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadic",
        description="Numerical laboratory for the inviscid dyadic shell model",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("scenario", choices=[s.value for s in Scenario], help="Scenario to run")
    parser.add_argument("--config", default=None, help="Path to a key = value run configuration")
    parser.add_argument("--out", default=None, help="Output directory (overrides run.outputs)")
    parser.add_argument("--seed", type=int, default=None, help="Seed for random initial data (u64)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override a configuration value; may be repeated",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    verbosity.add_argument("--quiet", action="store_true", help="Log warnings and errors only")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.WARNING)

    overrides = [f"run.scenario={args.scenario}", *args.overrides]
    if args.out is not None:
        overrides.append(f"run.outputs={args.out}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")

    try:
        config = load_config(args.config, overrides)
        record = run_scenario(config)
    except ValidationError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_VALIDATION
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except Exception:
        logger.exception("Unhandled error")
        return EXIT_UNHANDLED

    if record.status == "failed":
        logger.error(f"Run failed: {record.error}")
        return EXIT_NUMERICAL
    if record.status == "budget_exhausted":
        logger.error(f"Run stopped early at t={record.summary.get('status_t')} (step budget); partial output kept")
        return EXIT_NUMERICAL
    logger.info(f"Run {record.config_digest[:12]} {record.status}; files: {', '.join(record.files)}")
    return EXIT_OK


def cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli()
