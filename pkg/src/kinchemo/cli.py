"""Command-line entry point: ``kinchemo run|validate|bounds``."""

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigurationError, KinchemoError
from .runner import run_scenario

WORKERS_ENV = "KINCHEMO_WORKERS"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _workers_default():
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError("TYPE", WORKERS_ENV, f"expected an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError("POSITIVITY", WORKERS_ENV, "worker count must be positive")
    return n


def _print_config_error(exc):
    for err in getattr(exc, "errors", None) or [exc]:
        print(f"error: {err}", file=sys.stderr)


def cmd_run(args):
    cfg = load_config(args.config, _workers_default())
    if args.mode:
        from dataclasses import replace
        cfg = replace(cfg, mode=args.mode)
    summary, _ = run_scenario(cfg, args.out)
    print(f"{cfg.name}: mode={summary.mode} steps={summary.steps} t={summary.t_final:g} "
          f"violations={summary.violation_count} wall={summary.wall_time:.1f}s")
    if summary.extra.get("wrap_contact"):
        print(f"  warning: density support reached {summary.extra['support_extent_max']:.4g}, "
              "at least half the period; periodic images interact", file=sys.stderr)
    for t, d in summary.l1_distances.items():
        print(f"  L1(kinetic, agents) at t={t}: {d:.4g}")
    for row in summary.ladder:
        print(f"  ladder x{row['factor']:g}: variance={row['variance']:.6g} peak={row['peak']:.6g}")
    print(f"outputs in {args.out}")
    return EXIT_OK


def cmd_validate(args):
    cfg = load_config(args.config, _workers_default())
    print(f"{cfg.name} (config_hash={cfg.config_hash})")
    print(cfg.validation.summary())
    return EXIT_OK


def cmd_bounds(args):
    """Recompute the bound ledger from a recorded series without stepping anything."""
    from dataclasses import replace
    cfg = load_config(args.config, _workers_default())
    series = args.series or cfg.series_path
    if series is None:
        raise ConfigurationError("MISSING_FIELD", "monitor.series", "bounds needs a recorded series (--series)")
    if not Path(series).is_file():
        raise ConfigurationError("NOT_FOUND", str(series), "series file does not exist")
    cfg = replace(cfg, mode="monitor", series_path=str(series), ladder=())
    summary, res = run_scenario(cfg, args.out)
    ledger = res["ledger"]
    for q in ledger.quantities():
        rows = [r for r in ledger.rows if r.quantity == q]
        worst = min(rows, key=lambda r: r.margin)
        print(f"{q:>20s}: rows={len(rows)} violations={sum(r.violated for r in rows)} "
              f"min_margin={worst.margin:.6g} (t={worst.t:g})")
    print(f"violations={summary.violation_count} negative_control={summary.negative_control_violations}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="kinchemo", description="Kinetic chemotaxis simulator and bound monitor")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write its outputs")
    r.add_argument("config")
    r.add_argument("--out", required=True)
    r.add_argument("--mode", choices=("kinetic", "agent", "compare", "monitor"), help="override scenario.mode")
    r.set_defaults(fn=cmd_run)
    v = sub.add_parser("validate", help="load a scenario and report the growth hypotheses")
    v.add_argument("config")
    v.set_defaults(fn=cmd_validate)
    b = sub.add_parser("bounds", help="bound ledger from a recorded series.csv")
    b.add_argument("config")
    b.add_argument("--series", help="series.csv from an earlier run (default: monitor.series)")
    b.add_argument("--out", help="directory for the recomputed ledgers")
    b.set_defaults(fn=cmd_bounds)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        _print_config_error(exc)
        return EXIT_CONFIG
    except (KinchemoError, ValueError, FloatingPointError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
