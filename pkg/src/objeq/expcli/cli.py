"""Command-line entry point.

Every flag can also be set through an environment variable; flags win::

    OBJEQ_SEED      --seed
    OBJEQ_OUT       --out
    OBJEQ_MAX_DIM   --max-dim
    OBJEQ_THREADS   --threads

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 configuration error or
dimension overflow, 3 numerical error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .. import qops
from ..errors import ConfigParseError, DimensionOverflow, InvalidDims, ObjeqError
from . import runner
from .config import load_config

ENV_PREFIX = "OBJEQ_"
EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _env_default(name: str, cast=str):
    value = os.environ.get(ENV_PREFIX + name)
    return None if value in (None, "") else cast(value)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--max-dim", type=int, default=None, help="largest Hilbert-space dimension allowed")
    common.add_argument("--threads", type=int, default=None, help="BLAS thread count")

    parser = argparse.ArgumentParser(prog="objeq", description="Run equilibration and objectivity experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run one scenario config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", parents=[common], help="parse and check a config without running it")
    p_val.add_argument("config")
    p_suite = sub.add_parser("suite", parents=[common], help="run every *.ini config in a directory")
    p_suite.add_argument("directory")
    return parser


def _resolve(args) -> None:
    args.seed = args.seed if args.seed is not None else _env_default("SEED", int)
    args.out = args.out if args.out is not None else _env_default("OUT")
    args.max_dim = args.max_dim if args.max_dim is not None else _env_default("MAX_DIM", int)
    args.threads = args.threads if args.threads is not None else _env_default("THREADS", int)


def _load(path, args, out=None):
    config = load_config(path)
    return config.with_overrides(seed=args.seed, output_path=out if out is not None else args.out)


def _report(name: str, record: runner.ResultRecord) -> None:
    for v in record.verdicts:
        status = "PASS" if v.passed else "FAIL"
        print(f"{name}: {status} {v.name} value={v.value:.6g} tolerance={v.tolerance:.1e}")


def _run_one(path, args, out=None) -> tuple[int, runner.ResultRecord | None]:
    try:
        config = _load(path, args, out)
        record = runner.run(config)
    except (ConfigParseError, DimensionOverflow, InvalidDims) as exc:
        print(f"{path}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except (ObjeqError, ArithmeticError) as exc:
        print(f"{path}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL, None
    _report(Path(path).stem, record)
    return (EXIT_OK if record.passed else EXIT_VERDICT), record


def cmd_run(args) -> int:
    return _run_one(args.config, args)[0]


def cmd_validate(args) -> int:
    try:
        config = _load(args.config, args)
    except (ConfigParseError, DimensionOverflow, InvalidDims) as exc:
        print(f"{args.config}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.config}: ok ({config.experiment}, total dimension {config.total_dim})")
    return EXIT_OK


def cmd_suite(args) -> int:
    directory = Path(args.directory)
    configs = sorted(directory.glob("*.ini"))
    if not configs:
        print(f"{directory}: no *.ini configs found", file=sys.stderr)
        return EXIT_CONFIG
    worst = EXIT_OK
    summary = []
    for path in configs:
        out = None if args.out is None else str(Path(args.out) / path.stem)
        code, record = _run_one(path, args, out)
        worst = max(worst, code)
        summary.append(
            {
                "config": path.name,
                "exit_code": code,
                "verdicts": [] if record is None else [v.to_dict() for v in record.verdicts],
            }
        )
    target = Path(args.out) if args.out is not None else directory
    runner.write_atomic(target / "suite.json", runner.dumps({"configs": summary, "exit_code": worst}))
    print(f"suite: {sum(s['exit_code'] == 0 for s in summary)}/{len(summary)} configs passed")
    return worst


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "suite": cmd_suite}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _resolve(args)
    if args.max_dim is not None:
        if args.max_dim < 1:
            print("--max-dim must be positive", file=sys.stderr)
            return EXIT_CONFIG
        qops.set_max_dim(args.max_dim)
    if args.threads is not None:
        with threadpool_limits(limits=max(1, args.threads)):
            return COMMANDS[args.command](args)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
