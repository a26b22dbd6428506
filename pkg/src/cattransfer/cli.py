"""Command line entry point: run, sweep, check, defaults."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .config import DEFAULTS, SCENARIO_DEFAULTS, ConfigError, load
from .dynamics import ResourceError, StepSizeError
from .hamiltonians import ConditionError, ParameterError

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3

log = logging.getLogger("cattransfer")


def _csv_floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("no values given")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cattransfer", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configured scenario")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, help="output directory (overrides outputs.dir)")
    p.add_argument("--seed", type=int, help="overrides solver.seed")

    p = sub.add_parser("sweep", help="scan one parameter and tabulate the fidelity peak")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--axis", required=True, choices=runner.SWEEP_AXES,
                   help="g_cr in units of lambda, kappa in 1/s, alpha, omega_fe in Hz, dt in s")
    p.add_argument("--values", required=True, type=_csv_floats)
    p.add_argument("--out", type=Path, help="write the table as CSV here as well")
    p.add_argument("--workers", type=int, help=f"process count (default ${runner.WORKERS_ENV} or CPU count)")

    p = sub.add_parser("check", help="run the invariant suite")
    p.add_argument("--fast", action="store_true", help="smaller truncations and shorter runs")
    p.add_argument("--inject", choices=runner.INJECTIONS, help="break one ingredient on purpose")

    p = sub.add_parser("defaults", help="print the default config and per-scenario fallbacks")
    p.add_argument("--scenario", choices=sorted(SCENARIO_DEFAULTS))
    return ap


def _cmd_run(args) -> int:
    cfg = load(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(**{"solver.seed": args.seed})

    def progress(path, step, total):
        if step % 25 == 0 or step == total:
            log.info("%s: step %d / %d", path, step, total)

    outcome = runner.run_experiment(cfg, args.out, progress=progress if args.verbose else None)
    for path, entry in outcome.manifest["runs"].items():
        print(f"{path}: peak F = {entry['peak_fidelity']:.6f} at t/T = {entry['peak_t_over_T']:.3f}, "
              f"F(T) = {entry['fidelity_at_T']:.6f}  -> {outcome.csv_paths[path]}")
    print(f"manifest: {outcome.manifest_path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load(args.config)
    try:
        rows = runner.sweep(cfg, args.axis, args.values, workers=args.workers)
    except ValueError as exc:
        raise ConfigError(f"--{args.axis}", str(exc)) from None
    print(f"{args.axis:>12} {'path':>9} {'max_F':>10} {'t/T@max':>8} {'F(T)':>10}")
    for r in rows:
        print(f"{r['value']:12.6g} {r['path']:>9} {r['max_fidelity']:10.6f} "
              f"{r['argmax_t_over_T']:8.3f} {r['fidelity_at_T']:10.6f}")
    if args.out:
        runner.atomic_write(args.out, runner.sweep_csv(rows))
    return EXIT_OK


def _cmd_check(args) -> int:
    results = runner.run_checks(fast=args.fast, inject=args.inject)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<32} {r.detail}")
    bad = [r for r in results if not r.passed]
    print(f"{len(results) - len(bad)}/{len(results)} checks passed")
    return EXIT_OK if not bad else EXIT_VERIFY


def _cmd_defaults(args) -> int:
    doc = {"defaults": DEFAULTS, "scenario_fallbacks": SCENARIO_DEFAULTS}
    if args.scenario:
        doc = {**DEFAULTS, "scenario": args.scenario}
    print(json.dumps(doc, indent=2))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "check": _cmd_check, "defaults": _cmd_defaults}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (StepSizeError, ConditionError) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
