"""Command-line entry point: ``twosex-ebt run|presets|check``."""

from __future__ import annotations

import argparse
import sys

from . import config as config_mod
from .errors import EBTError
from .harness import run_experiment
from .model import PRESETS
from .scalar_ebt import SCALAR_PRESETS


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twosex-ebt",
                                description="Escalator boxcar train convergence experiments")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a convergence experiment")
    r.add_argument("config")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.add_argument("--threads", type=int, default=1, help="parallel width runs")
    r.add_argument("--strict", action="store_true",
                   help="exit nonzero when any diagnostic fires or the report is invalid")
    c = sub.add_parser("check", help="validate a config without running it")
    c.add_argument("config")
    sub.add_parser("presets", help="list coefficient presets")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "presets":
            for name in sorted(PRESETS):
                print(f"two-sex  {name}")
            for name in sorted(SCALAR_PRESETS):
                print(f"scalar   {name}")
            return 0
        cfg = config_mod.load(args.config)
        if args.command == "check":
            print(f"ok: {cfg.name} ({cfg.model}, preset {cfg.preset}, "
                  f"{len(cfg.widths)} widths)")
            return 0
        if args.threads < 1:
            raise config_mod.ConfigurationError("--threads must be >= 1")
        report = run_experiment(cfg, threads=args.threads, out_dir=args.out)
    except (EBTError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for r in report.results:
        print(f"width={r.width!r} error={r.error:.6e}")
    print(f"order={report.order:.4f} valid={report.valid}")
    for note in report.notes:
        print(f"note: {note}")
    if args.strict and not (report.valid and report.diagnostics_clean):
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
