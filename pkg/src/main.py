# pwlab - bandlimited sampling lab command line

import argparse
import asyncio
import json
import sys
from typing import List, Optional

from loguru import logger

from services.config_service import ARTIFACT_VERSION, load_config, load_settings
from services.error_handler import ConfigInvalid, PwlabError, error_handler
from services.experiment_runner import ExperimentOrchestrator, list_experiments
from services.results_store import to_jsonable

EXIT_PASS = 0
EXIT_FAILURE = 1
EXIT_PROPERTY_FAILED = 2
EXIT_CONFIG = 3


def configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level)
    logger.add("logs/pwlab_{time}.log", rotation="1 day", level="DEBUG")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pwlab", description="Sampling-series experiments for bandlimited signals")
    parser.add_argument("--version", action="version", version=f"%(prog)s {ARTIFACT_VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run the experiment described by a JSON config")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--output-dir", help="override the config's output directory")

    listing = commands.add_parser("list", help="list the available experiments")
    listing.add_argument("--json", action="store_true", help="print the catalog as JSON")

    frame = commands.add_parser("frame-check", help="build a measurement frame and check it")
    frame.add_argument("--k", type=int, choices=(2, 3), default=2, help="frame dimension K")
    return parser


def _print_json(data) -> None:
    print(json.dumps(to_jsonable(data), indent=2, sort_keys=True))


def _list(as_json: bool) -> int:
    catalog = list_experiments()
    if as_json:
        _print_json(catalog)
    else:
        for entry in catalog:
            print(f"{entry['name']:<14} {entry['anchor']}")
            print(f"{'':<14} required: {', '.join(entry['required'])}")
    return EXIT_PASS


def _frame_check(K: int) -> int:
    summary = ExperimentOrchestrator.check_frame(K)
    _print_json(summary)
    return EXIT_PASS if summary["pass"] else EXIT_PROPERTY_FAILED


def _run(config_path: str, output_dir: Optional[str], threads: int, default_output_dir: str) -> int:
    config = load_config(config_path, default_output_dir)
    if output_dir:
        config.output_dir = output_dir
    manifest = asyncio.run(ExperimentOrchestrator(threads).run(config))
    _print_json(manifest.to_dict())
    return EXIT_PASS if manifest.passed else EXIT_PROPERTY_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
    except ConfigInvalid as e:
        print(f"configuration error: {e.message}", file=sys.stderr)
        return EXIT_CONFIG
    configure_logging(settings.log_level)

    try:
        if args.command == "list":
            return _list(args.json)
        if args.command == "frame-check":
            return _frame_check(args.k)
        return _run(args.config, args.output_dir, settings.threads, str(settings.output_dir))
    except ConfigInvalid as e:
        error_handler.handle_error(e)
        print(f"configuration error: {e.message}", file=sys.stderr)
        return EXIT_CONFIG
    except (PwlabError, OSError) as e:
        error_handler.handle_error(e, context={"command": args.command})
        print(f"error: {e}", file=sys.stderr)
        logger.debug(f"Error stats: {error_handler.get_error_stats()}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
