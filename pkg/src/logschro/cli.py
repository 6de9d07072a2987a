"""Command-line front end.

    logschro verify   --config cfg.ini --out results/ [--seed N]
    logschro sweep    --config cfg.ini --out results/ [--seed N]
    logschro solve    --config cfg.ini --out results/ [--seed N]
    logschro simulate --config cfg.ini --out results/ [--seed N]
    logschro kernel   --config cfg.ini --out results/ [--seed N]
    logschro force    --config cfg.ini --out results/ [--seed N]

``verify`` runs the whole chain and exits 0 only if every judged record
passes; the single-stage subcommands expose one module each for debugging.
The optional LOGSCHRO_THREADS environment variable bounds the worker count
of the per-start-node parallel stages (absent means all available cores);
it never changes any emitted number.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, StageError
from .experiments import ReportBundle, emit_report, run_stages, run_sweep, run_verify

_STAGE_SETS = {
    "solve": ("solver", "balance"),
    "simulate": ("solver", "sde"),
    "kernel": ("solver", "sde", "kernel"),
    "force": ("solver", "sde", "force"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logschro",
                                     description="log-Schrodinger verification laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("verify", "sweep", "solve", "simulate", "kernel", "force"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the INI configuration")
        p.add_argument("--out", required=True, help="output directory for the report")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def _print_summary(bundle: ReportBundle):
    for r in bundle.records:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.stage}.{r.name}: {r.value:.6g} (tolerance {r.tolerance:.6g})")
    print(f"all_pass: {bundle.all_pass}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.command == "verify":
            bundle = run_verify(cfg)
        elif args.command == "sweep":
            bundle = run_sweep(cfg)
        else:
            bundle = run_stages(cfg, _STAGE_SETS[args.command])
    except ConfigError as exc:
        where = f" (key {exc.key})" if exc.key else ""
        print(f"configuration error{where}: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    manifest = emit_report(bundle, args.out)
    _print_summary(bundle)
    for path in manifest:
        print(f"wrote {path}")
    if args.command == "verify":
        return 0 if bundle.all_pass else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
