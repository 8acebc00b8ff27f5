"""Command line entry point.

    mastersample run -c experiment.ini -o results/ [--seed N] [-v]
    mastersample run --resume results/runs/.../checkpoint.npz

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ConfigError, load_config

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mastersample", description="Master-sample attacks on a synthetic world.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment (or resume one run)")
    run.add_argument("-c", "--config", type=Path, help="INI config file (defaults apply when omitted)")
    run.add_argument("-o", "--output", type=Path, help="output directory (overrides [experiment] output_dir)")
    run.add_argument("--seed", type=int, help="root seed override")
    run.add_argument("--resume", type=Path, metavar="CHECKPOINT", help="finish the run stored in a checkpoint")
    run.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    return p


def _experiment_root(checkpoint: Path) -> Path | None:
    for parent in checkpoint.resolve().parents:
        if (parent / "config.ini").exists():
            return parent
    return None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    from .experiment import resume, run_experiment

    try:
        if args.resume is not None:
            resume(args.resume)
            print(f"resumed run finished: {args.resume.parent}")
            root = _experiment_root(args.resume)
            if args.config is None and root is None:
                return EXIT_OK
            cfg_path = args.config if args.config is not None else root / "config.ini"
            out = args.output if args.output is not None else root
        else:
            cfg_path, out = args.config, args.output
        cfg = load_config(cfg_path, root_seed=args.seed) if cfg_path is not None else load_config(text="", root_seed=args.seed)
        if out is not None:
            cfg = replace(cfg, output_dir=str(out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        run_experiment(cfg, cfg.output_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted; rerun the same command to resume", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
