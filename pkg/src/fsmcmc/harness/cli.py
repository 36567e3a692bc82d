"""fsmcmc command line: run / validate / report.

Exit codes: 0 success, 1 verdict failure, 2 config error, 3 I/O error.
The FSMCMC_SEED environment variable overrides the config seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import run_experiment, write_result
from .report import render_figures, render_table

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsmcmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("-c", "--config", help="config file (.json or .toml)")
    run.add_argument("-o", "--output", help="output directory")
    run.add_argument("--threads", type=int, default=os.cpu_count(),
                     help="worker threads (results are thread-count invariant)")
    run.add_argument("--all", action="store_true",
                     help="run every bundled config into OUTPUT/<name>/")

    val = sub.add_parser("validate", help="check a config file and exit")
    val.add_argument("-c", "--config", required=True)

    rep = sub.add_parser("report", help="render a table and figures from a sweep CSV")
    rep.add_argument("-i", "--input", required=True, help="sweep.csv path")
    rep.add_argument("--no-figures", action="store_true", help="table only")
    return parser


def _seed_override() -> int | None:
    raw = os.environ.get("FSMCMC_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError("FSMCMC_SEED", f"must be an integer, got {raw!r}") from exc


def bundled_configs() -> dict[str, Path]:
    root = resources.files("fsmcmc.harness") / "configs"
    return {p.stem: Path(str(p)) for p in sorted(root.iterdir()) if p.suffix in (".json", ".toml")}


def _run_one(config_path, outdir, threads) -> bool:
    config = load_config(config_path, seed_override=_seed_override())
    result = run_experiment(config, threads=threads)
    paths = write_result(result, outdir)
    for name, ok in result.verdicts.items():
        print(f"{result.experiment}: {name}: {'PASS' if ok else 'FAIL'}")
    print(f"wrote {paths['csv']} and {paths['json']}")
    return result.passed


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            load_config(args.config, seed_override=_seed_override())
            print(f"{args.config}: valid")
            return EXIT_OK

        if args.command == "run":
            if args.all:
                if not args.output:
                    parser.error("--all needs -o/--output")
                ok = True
                for name, path in bundled_configs().items():
                    print(f"== {name} ==")
                    ok = _run_one(path, Path(args.output) / name, args.threads) and ok
                return EXIT_OK if ok else EXIT_VERDICT
            if not args.config or not args.output:
                parser.error("run needs -c/--config and -o/--output")
            ok = _run_one(args.config, args.output, args.threads)
            return EXIT_OK if ok else EXIT_VERDICT

        if args.command == "report":
            table = render_table(args.input)
            sys.stdout.write(table)
            if not args.no_figures:
                for path in render_figures(args.input):
                    print(f"figure: {path}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
