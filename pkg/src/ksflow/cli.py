"""Command line entry point: ``ksflow run | sweep | check-estimates``.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 estimate check
failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .core import ConfigError
from .estimates import audit_rows, format_table
from .runner import SimulationError, load_config, run_single, sweep_m

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_ESTIMATES = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksflow", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for sweeps (1 = single-threaded, reproducible)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate one configuration")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--no-plots", action="store_true")

    sweep = sub.add_parser("sweep", help="run one configuration for several m")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--m", required=True, help="comma separated list, e.g. 1.4,1.5,2.0")
    sweep.add_argument("--out", default=None)
    sweep.add_argument("--no-plots", action="store_true")

    sub.add_parser("check-estimates", help="exact audit of the exponent algebra")
    return parser


def _parse_m_list(text: str) -> list:
    items = [s for s in (t.strip() for t in text.split(",")) if s]
    try:
        return [float(s) for s in items]
    except ValueError as exc:
        raise ConfigError(f"bad --m list {text!r}") from exc


def _check_estimates() -> int:
    rows = audit_rows()
    print(format_table(rows))
    for r in rows:
        if r.status == "WARN":
            print(f"warning: {r.check} does not hold ({r.result}); reported, not fatal",
                  file=sys.stderr)
    return EXIT_ESTIMATES if any(r.status == "FAIL" for r in rows) else EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "check-estimates":
        return _check_estimates()
    try:
        config = load_config(args.config)
        if args.command == "run":
            if args.seed is not None:
                config = replace(config, seed=args.seed)
            report = run_single(config, out_dir=args.out, plots=not args.no_plots)
            out = args.out or os.environ.get("KSFLOW_OUTPUT_DIR") or config.output_dir
            last = report.series[-1]
            print(f"verdict: {report.verdict.kind} ({report.verdict.evidence})")
            print(f"steps: {report.step_count}  t: {last.t:.6g}  sup_n: {last.sup_n:.6g}  "
                  f"mass drift: {report.metadata['mass_check']['max_drift']:.3e}")
            print(f"output: {out}")
        else:
            rows = sweep_m(config, _parse_m_list(args.m), threads=args.threads,
                           out_dir=args.out, plots=not args.no_plots)
            print(f"{'m':>8}  {'verdict':<16}  {'final sup_n':>14}  {'min dt':>12}  error")
            for r in rows:
                sup = "" if r["final_sup_n"] is None else f"{r['final_sup_n']:.6g}"
                mdt = "" if r["min_dt"] is None else f"{r['min_dt']:.4g}"
                print(f"{r['m']:>8g}  {str(r['verdict'] or '-'):<16}  {sup:>14}  {mdt:>12}  {r['error']}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
