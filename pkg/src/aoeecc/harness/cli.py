"""Command-line entry point: run, sweep, validate, oracle."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, dumps, load
from .engine import InvariantError

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("aoeecc")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aoeecc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write its checkpoint CSV")
    run.add_argument("config")
    run.add_argument("--output", "-o", help="CSV path ('-' for stdout); overrides config")
    run.add_argument("--seed", type=int)

    sw = sub.add_parser("sweep", help="run a seed range and write mean/std rows")
    sw.add_argument("config")
    sw.add_argument("--seeds", required=True, help="inclusive range A..B")
    sw.add_argument("--parallel", type=int, default=1)
    sw.add_argument("--output", "-o")
    sw.add_argument("--per-seed", action="store_true", help="also write every seed's rows")

    val = sub.add_parser("validate", help="parse and check a config, print the normalised form")
    val.add_argument("config")

    orc = sub.add_parser("oracle", help="brute-force checks for small K")
    orc.add_argument("config")
    return p


def _out_path(cfg, override):
    return override or cfg.output or "-"


def _cmd_run(args) -> int:
    from .runner import run_experiment, write_csv

    cfg = load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    res = run_experiment(cfg)
    write_csv(res, _out_path(cfg, args.output))
    f = res.final
    log.info("final t=%d regret=%.6g violation=%.6g ee=%.6g", f.t, f.regret, f.violation, f.ee)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .runner import parse_seed_range, result_rows, sweep, write_csv

    cfg = load(args.config)
    try:
        seeds = parse_seed_range(args.seeds)
    except ValueError as exc:
        raise ConfigError(f"--seeds: {exc}") from exc
    if args.parallel < 1:
        raise ConfigError("--parallel: must be >= 1")
    res = sweep(cfg, seeds, args.parallel)
    rows = list(res.aggregate)
    if args.per_seed:
        rows = [r for run in res.runs for r in result_rows(run)] + rows
    write_csv(rows, _out_path(cfg, args.output))
    for seed, err in res.failures:
        print(f"seed {seed} failed: {err}", file=sys.stderr)
    return EXIT_INVARIANT if res.failures else EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load(args.config)
    sys.stdout.write(dumps(cfg))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    from .oracle import run_oracles

    cfg = load(args.config)
    try:
        checks = run_oracles(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name}: error {c.error:.3g} (tol {c.tol:g})")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_INVARIANT


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate,
            "oracle": _cmd_oracle}


def main(argv=None) -> int:
    from .runner import configure_logging

    configure_logging()
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        for key, val in getattr(exc, "dump", {}).items():
            print(f"  {key}: {val}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
