"""Command-line entry points: run, sweep, oracle-check."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import oracles
from .harness import (
    SWEEP_AXES,
    VARIANTS,
    ablation_sweep,
    emit_plot_data,
    load_config,
    resolve_out_dir,
    run_variant,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ridepool",
        description="Ride-pooling dispatch experiments: training runs, sweeps, oracle checks.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train or evaluate one variant")
    run_p.add_argument("--config", required=True, help="YAML run configuration")
    run_p.add_argument("--variant", choices=VARIANTS, default=None,
                       help="override the configured variant")
    run_p.add_argument("--seed", type=int, action="append", default=None,
                       help="override seeds (repeatable)")
    run_p.add_argument("--out", default=None, help="override output directory")

    sweep_p = sub.add_parser("sweep", help="compare variants across one axis")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES),
                         help="; ".join(f"{k}: {v}" for k, v in sorted(SWEEP_AXES.items())))
    sweep_p.add_argument("--values", required=True, nargs="+", type=float)
    sweep_p.add_argument("--out", default=None)

    oracle_p = sub.add_parser("oracle-check",
                              help="validate fast paths against reference implementations")
    oracle_p.add_argument("--seed", type=int, default=0)
    oracle_p.add_argument("--cases", type=int, default=25,
                          help="base case count per suite")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed:
        cfg = replace(cfg, seeds=list(args.seed))
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    variant = args.variant or cfg.variant
    out_dir = resolve_out_dir(cfg.out_dir)
    report = run_variant(cfg, variant, out_dir=out_dir)
    emit_plot_data({variant: report}, Path(out_dir))
    for res in report.results:
        print(
            f"{variant} seed {res.seed}: eval revenue {res.eval_revenue:.2f}, "
            f"served {res.eval_served:.1f}"
        )
    print(f"{variant} mean eval revenue over {len(report.results)} seeds: "
          f"{report.mean_revenue:.2f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    rows = ablation_sweep(cfg, args.axis, list(args.values),
                          out_dir=resolve_out_dir(cfg.out_dir))
    for row in rows:
        cells = ", ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in row.items())
        print(cells)
    return 0


def _cmd_oracle_check(args) -> int:
    results = oracles.run_oracle_checks(seed=args.seed, cases=args.cases)
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} of {len(results)} oracle suites failed")
    return 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "sweep":
        return _cmd_sweep(args)
    return _cmd_oracle_check(args)


if __name__ == "__main__":
    sys.exit(main())
