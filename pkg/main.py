"""
bpire-lab - command-line experiment runner

Each subcommand runs one experiment kind. A config file supplies the
environment and module sections; flags override the run section.
"""

import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv

from core.errors import ConfigError

# Load environment variables
load_dotenv()

KINDS = ["validate", "bpire", "walk", "couple", "ladder", "ar", "classify", "reproduce-example"]

EXIT_CODES = """exit codes:
  0  success
  1  unexpected error
  2  configuration error
  3  environment spec violates a required assumption
  4  resource limit exceeded (use --streaming or fewer replicas)
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bpire-lab",
        description="Simulate branching processes with random immigration in random environment "
                    "and excited random walks, and classify their recurrence.",
        epilog=EXIT_CODES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in KINDS:
        sub = subparsers.add_parser(kind, epilog=EXIT_CODES, formatter_class=argparse.RawDescriptionHelpFormatter)
        sub.add_argument("--config", help="Path to a YAML or JSON experiment config")
        sub.add_argument("--seed", type=int, help="Experiment seed")
        sub.add_argument("--replicas", type=int, help="Number of replicas")
        sub.add_argument("--horizon", type=int, help="Number of generations / steps")
        sub.add_argument("--workers", type=int, help="Worker processes")
        sub.add_argument("--out-dir", help="Output directory (default: BPIRE_LAB_OUT_DIR or ./results)")
        sub.add_argument("--format", choices=["csv", "json"], help="Table format")
        sub.add_argument(
            "--classical-mode", action="store_true", default=None,
            help="Allow p = 1/2 almost surely (classical excited walk)",
        )
        sub.add_argument("--exact-threshold", type=int, help="Largest population kept as an exact integer")
        sub.add_argument("--streaming", action="store_true", default=None, help="Record checkpoints only")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the experiment and return its exit status."""
    from core.config import LabSettings
    from core.graph import run
    from core.loader import load_config, with_overrides
    from utils.logging import get_logger

    args = build_parser().parse_args(argv)
    logger = get_logger("main")

    try:
        config = load_config(args.config) if args.config else None
        config = with_overrides(
            config,
            kind=args.kind,
            seed=args.seed,
            replicas=args.replicas,
            horizon=args.horizon,
            workers=args.workers,
            out_dir=args.out_dir,
            format=args.format,
            classical_mode=args.classical_mode,
            exact_threshold=args.exact_threshold,
            streaming=args.streaming,
        )
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return e.exit_code

    try:
        return run(config, LabSettings())
    except Exception as e:
        logger.error(f"Experiment failed: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
