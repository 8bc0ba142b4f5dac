"""Command-line entry point: ``bucmrl run|compare|validate|presets``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_preset, preset_names, preset_path
from .errors import BucMatrixRLError, ConfigError, IncompatibleRuns

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("bucmatrixrl")


def _load_config(ref: str) -> ExperimentConfig:
    """A path to an INI file, or the name of a shipped preset."""
    if Path(ref).is_file():
        return ExperimentConfig.from_file(ref)
    if ref in preset_names():
        return load_preset(ref)
    raise ConfigError("config", f"no such file or preset: {ref}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bucmrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a config or preset")
    run.add_argument("config")
    run.add_argument("--out", help="run directory (overrides [output] dir)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--master-seed", type=int)

    cmp_ = sub.add_parser("compare", help="paired comparison of run directories")
    cmp_.add_argument("dirs", nargs="+")
    cmp_.add_argument("--out", help="write the per-seed table to this CSV file")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")

    pre = sub.add_parser("presets", help="shipped preset configs")
    pre_sub = pre.add_subparsers(dest="presets_command", required=True)
    pre_sub.add_parser("list")
    show = pre_sub.add_parser("show")
    show.add_argument("name")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            from .experiment import run_scenario

            cfg = _load_config(args.config)
            if args.master_seed is not None:
                cfg.run.master_seed = args.master_seed
            if args.workers < 1:
                raise ConfigError("--workers", "must be >= 1")
            out = run_scenario(cfg, args.out, workers=args.workers)
            print(out)
        elif args.command == "compare":
            from .experiment import compare, render_comparison

            print(render_comparison(compare(args.dirs, args.out)))
        elif args.command == "validate":
            cfg = _load_config(args.config)
            print(f"ok {cfg.digest()}")
        elif args.presets_command == "list":
            print("\n".join(preset_names()))
        else:
            if args.name not in preset_names():
                raise ConfigError("preset", f"unknown preset {args.name!r}")
            print(preset_path(args.name).read_text(), end="")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BucMatrixRLError, IncompatibleRuns, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
