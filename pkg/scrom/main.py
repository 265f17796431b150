import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

from scrom import pipeline
from scrom.errors import ConfigError, ScromError
from scrom.models import ScenarioConfig
from scrom.scenario_importer import ScenarioImporter

logger = logging.getLogger("scrom")

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_RUNTIME_ERROR = 2

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

COMMANDS = ("fom-run", "build-basis", "rom-run", "compare", "verify")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scrom",
        description="Subdomain-conservative reduced-order models for finite-volume problems",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Scenario or batch file (YAML or JSON)")
    common.add_argument("--out", help="Output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="RNG seed (overrides seed)")
    common.add_argument("--threads", type=int, default=1, help="Worker threads for batch files")
    common.add_argument("--log-level", choices=sorted(LOG_LEVELS), default="info")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fom-run", parents=[common], help="Integrate the FOM and write snapshots")
    sub.add_parser("build-basis", parents=[common], help="Build the ROM basis artifact from snapshots")
    sub.add_parser("rom-run", parents=[common], help="Integrate the ROM and write its report")
    compare = sub.add_parser("compare", parents=[common], help="Compare two reports against thresholds")
    compare.add_argument("report_a")
    compare.add_argument("report_b")
    verify = sub.add_parser("verify", parents=[common], help="Re-audit a ROM artifact")
    verify.add_argument("artifact", nargs="?", help="Artifact path (default: the scenario's rom_<kind>.npz)")
    return parser


def run_command(args: argparse.Namespace, cfg: ScenarioConfig) -> int:
    """Run one command for one scenario and map the outcome to an exit code."""
    try:
        if args.command == "fom-run":
            pipeline.run_fom(cfg)
        elif args.command == "build-basis":
            pipeline.build_rom(cfg)
        elif args.command == "rom-run":
            pipeline.run_rom(cfg)
        elif args.command == "compare":
            result = pipeline.compare(cfg, Path(args.report_a), Path(args.report_b))
            print(result.text, end="")
            return EXIT_OK if result.passed else EXIT_FAILED_CHECK
        elif args.command == "verify":
            result = pipeline.verify(cfg, Path(args.artifact) if args.artifact else None)
            print(result.text, end="")
            return EXIT_OK if result.passed else EXIT_FAILED_CHECK
    except ConfigError as exc:
        logger.error("%s: %s", cfg.name, exc)
        return EXIT_FAILED_CHECK
    except (ScromError, OSError) as exc:
        logger.error("%s: %s failed: %s", cfg.name, args.command, exc)
        return EXIT_RUNTIME_ERROR
    except Exception:
        logger.exception("%s: unexpected error in %s", cfg.name, args.command)
        return EXIT_RUNTIME_ERROR
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=LOG_LEVELS[args.log_level],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        logger.error("--threads must be at least 1")
        return EXIT_FAILED_CHECK

    try:
        configs = ScenarioImporter().load(args.config, out=args.out, seed=args.seed)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_FAILED_CHECK

    if args.threads == 1 or len(configs) == 1:
        codes = [run_command(args, cfg) for cfg in configs]
    else:
        with ThreadPoolExecutor(max_workers=args.threads) as executor:
            codes = list(executor.map(lambda cfg: run_command(args, cfg), configs))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
