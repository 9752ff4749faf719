"""Command line entry point: ``wnlbracket COMMAND --config PATH [options]``.

Exit status 0 means every requested verdict passed, 1 that a verdict
failed and 2 a configuration or runtime error.
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, bundled_configs, load_config
from .report import dumps, write_report
from .runner import COMMANDS, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wnlbracket",
        description="Check weakly nonlocal brackets of hydrodynamic type.",
        epilog=f"bundled configs: {', '.join(bundled_configs())}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("names", nargs="*", help="functional names for 'bracket F G'")
    p.add_argument("--config", required=True, help="config path or bundled file name")
    p.add_argument("--out", help="write the JSON report here (default: stdout)")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--grid-L", dest="grid_L", type=float)
    p.add_argument("--grid-m", dest="grid_m", type=int)
    p.add_argument("--tol-geometry", dest="tol_geometry", type=float)
    p.add_argument("--tol-skew", dest="tol_skew", type=float)
    p.add_argument("--tol-jacobi", dest="tol_jacobi", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--functional", help="functional name for vd / gateaux-check")
    p.add_argument("--at", help="test function name for vd / bracket")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("seed", "trials", "grid_L", "grid_m",
                                               "tol_geometry", "tol_skew", "tol_jacobi",
                                               "samples") if getattr(args, k) is not None}
    try:
        cfg = load_config(args.config, overrides)
        report, code = run(cfg, args.command, functional=args.functional, at=args.at,
                           functionals=args.names or None)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return 2
    except Exception as exc:  # any failure inside a suite is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.out:
        write_report(report, args.out)
    else:
        sys.stdout.write(dumps(report))
    verdict = report.get("verdict", {})
    summary = verdict.get("poisson", verdict.get("status", ""))
    print(f"{args.command}: {summary} (exit {code})", file=sys.stderr)
    for reason in verdict.get("reasons", []):
        print(f"  {reason}", file=sys.stderr)
    for d in report.get("diagnostics", []):
        print(f"  {d['location']}: {d['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
