"""Command-line entry point.

Exit codes: 0 success, 1 invalid config or arguments, 2 runtime or verification failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .packets import SetupError
from .runner import COMMANDS, RunFailure, run

log = logging.getLogger("intensity_hybrids")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="intensity-hybrids",
        description="Double-slit intensity hybrids: profiles, trajectories and checks.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="overrides trajectories.seed")
    ap.add_argument("--threads", type=int, default=1, help="trajectory worker threads")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid config\n{exc}", file=sys.stderr)
        return 1
    try:
        manifest = run(args.command, cfg, args.out, seed=args.seed, threads=args.threads)
    except (SetupError, ValueError) as exc:
        print(f"invalid run parameters: {exc}", file=sys.stderr)
        return 1
    except RunFailure as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any crash maps to exit code 2
        log.exception("run failed")
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    log.info("wrote %d files to %s", len(manifest["files"]) + 1, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
