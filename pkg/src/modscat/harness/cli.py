"""Command-line entry point.

Exit codes: 0 success, 2 guard breach, 3 configuration error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from ..propagator import GuardBreach
from .config import ConfigError, parse_config


def _cmd_run(args) -> int:
    from .runner import NumericalFailure, run_scenario

    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    try:
        manifest = run_scenario(cfg, out_dir=args.out, resume=args.resume)
    except GuardBreach as exc:
        print(f"guard breach: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    out = args.out or cfg.resolve().out_dir
    print(f"run complete: {len(manifest['artifacts'])} artifacts in {out}")
    return 0


def _cmd_oracle(args) -> int:
    from .oracles import format_oracle_report, oracle_suite

    results = oracle_suite(args.suite)
    print(format_oracle_report(results))
    return 0 if all(r.passed for r in results) else 4


def _load_report(trace_dir):
    from .io import read_json

    path = os.path.join(trace_dir, "report.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no report.json under {trace_dir}")
    return read_json(path)


def _cmd_report(args) -> int:
    rep = _load_report(args.trace)
    print(f"equation {rep['equation']}  epsilon {rep['epsilon']:.17g}  status {rep['status']}")
    if "decay_slope" in rep:
        print(
            f"decay_slope {rep['decay_slope']:.17g} +- {rep['decay_stderr']:.17g} "
            f"(window {rep['decay_window'][0]:g}..{rep['decay_window'][1]:g})"
        )
    if "growth_slope" in rep:
        print(f"growth_slope {rep['growth_slope']:.17g} +- {rep['growth_stderr']:.17g}")
    if rep.get("residual_exponent") is not None:
        print(
            f"residual_exponent {rep['residual_exponent']:.17g} "
            f"+- {rep['residual_exponent_err']:.17g}"
        )
    if "phase_slope_median_rel_gap" in rep:
        print(f"phase_slope_median_rel_gap {rep['phase_slope_median_rel_gap']:.17g}")
    for key in ("mass_drift", "max_phys_gap_ratio", "max_fourier_gap_ratio",
                "max_gamma_sup_ratio", "max_gamma_l2_ratio", "max_gamma_dbeta_ratio",
                "max_conv_vs_direct", "max_fourier_vs_direct"):
        if key in rep:
            print(f"{key} {rep[key]:.17g}")
    if "cauchy_gaps" in rep:
        print("cauchy_gaps " + " ".join("%.17g" % g for g in rep["cauchy_gaps"]))
        print("gamma_gaps " + " ".join("%.17g" % g for g in rep["gamma_gaps"]))
    return 0


def _cmd_export_csv(args) -> int:
    path = os.path.join(args.trace, "trace.csv")
    with open(path, "r", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="modscat",
        description="Pseudospectral long-time scattering harness for nonlocal NLS",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--resume", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_or = sub.add_parser("oracle", help="run the small-scale oracle battery")
    p_or.add_argument(
        "--suite", default="all", choices=["all", "kernels", "gamma", "propagator"]
    )
    p_or.set_defaults(fn=_cmd_oracle)

    p_rep = sub.add_parser("report", help="print fitted exponents for a trace")
    p_rep.add_argument("--trace", required=True)
    p_rep.set_defaults(fn=_cmd_report)

    p_csv = sub.add_parser("export-csv", help="write the trace CSV to stdout")
    p_csv.add_argument("--trace", required=True)
    p_csv.set_defaults(fn=_cmd_export_csv)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
