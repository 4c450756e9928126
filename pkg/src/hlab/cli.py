"""Command-line front end.

    hlab run <config-file>            execute a study, write its reports
    hlab capacity --n 3 --r 1.0       capacity oracle
    hlab cell --n 3 --alpha 3 --eps 0.25 --k auto
    hlab report <dir> --format csv|json|plot

Exit codes: 0 pass, 1 study-assertion failure, 2 config error,
3 solver error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .correctors import (
    ANALYTIC,
    NUMERIC,
    CellProblem,
    harmonic_capacity,
    solve_cell_corrector,
)
from .errors import AlignmentError, ConfigError, HlabError, UnsupportedDimensionError
from .report import HRule, StudyReport, emit_report

EXIT_PASS = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a study from a flat key-value config file")
    run.add_argument("config", help="path to the config file")
    run.add_argument("--out", help="override the output directory")

    cap = sub.add_parser("capacity", help="harmonic capacity of a ball")
    cap.add_argument("--n", type=int, default=3)
    cap.add_argument("--r", type=float, default=1.0)
    cap.add_argument("--method", choices=["analytic", "numeric"], default="analytic")
    cap.add_argument("--R", type=float, default=None, help="outer radius for numeric")

    cell = sub.add_parser("cell", help="solve one periodic corrector cell")
    cell.add_argument("--n", type=int, default=3)
    cell.add_argument("--alpha", type=float, required=True)
    cell.add_argument("--eps", type=float, required=True)
    cell.add_argument("--k", default="auto", help="cell source, or 'auto' for cap(B_1)")
    cell.add_argument("--c0", type=float, default=1.0)
    cell.add_argument("--resolve", type=float, default=6.0)
    cell.add_argument("--max-nodes", type=int, default=96)
    cell.add_argument("--tol", type=float, default=1e-8)

    rep = sub.add_parser("report", help="re-emit a stored report in another format")
    rep.add_argument("dir", help="directory containing report.json")
    rep.add_argument("--format", choices=["csv", "json", "plot"], default="csv")
    return parser


def _cmd_run(args) -> int:
    from .lab import parse_config_text, run_study, study_config_from_mapping

    with open(args.config) as handle:
        mapping = parse_config_text(handle.read())
    if args.out:
        mapping["out_dir"] = args.out
    cfg = study_config_from_mapping(mapping)
    if cfg.out_dir is None:
        mapping["out_dir"] = os.path.splitext(args.config)[0] + ".out"
        cfg = study_config_from_mapping(mapping)
    report = run_study(cfg)
    for v in report.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.name}: {v.values}")
    print(f"report written to {cfg.out_dir}")
    return EXIT_PASS if report.passed else EXIT_ASSERTION


def _cmd_capacity(args) -> int:
    method = ANALYTIC if args.method == "analytic" else NUMERIC
    value = harmonic_capacity(args.r, args.n, method, R=args.R)
    print(repr(value))
    return EXIT_PASS


def _cmd_cell(args) -> int:
    k = harmonic_capacity(1.0, args.n) if args.k == "auto" else float(args.k)
    a = args.c0 * args.eps**args.alpha
    rule = HRule(resolve=args.resolve, max_nodes=args.max_nodes)
    m = rule.cell_divisions(args.eps, a)
    sol = solve_cell_corrector(
        CellProblem(args.n, args.eps, a, k, args.eps / m), tol=args.tol
    )
    print(
        f"eps={args.eps} a={a:.6g} cells={m} k={k:.6g} "
        f"min_w={sol.min_w:.8g} hole_flux={sol.hole_flux:.8g} "
        f"residual={sol.residual:.3e} iters={sol.iterations}"
    )
    return EXIT_PASS


def _cmd_report(args) -> int:
    path = os.path.join(args.dir, "report.json")
    with open(path) as handle:
        report = StudyReport.from_json(handle.read())
    fmt = {"csv": "CSV", "json": "JSON", "plot": "PLOTDATA"}[args.format]
    for written in emit_report(report, fmt, args.dir):
        print(written)
    return EXIT_PASS


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = {
        "run": _cmd_run,
        "capacity": _cmd_capacity,
        "cell": _cmd_cell,
        "report": _cmd_report,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, AlignmentError, UnsupportedDimensionError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HlabError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
