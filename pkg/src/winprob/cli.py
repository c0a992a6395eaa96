"""Command-line entry point: ``analyze``, ``simulate``, and ``convert``.

Results go to standard output (or ``--out``); warnings and errors go to the
diagnostic stream.  Exit codes: 0 success, 2 input/usage error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

from ._version import __version__
from .data import Direction
from .epds import canonical_text, embedded_epds
from .errors import InputError, WinprobError
from .inference import convert_effects
from .io import INFER_BASELINE, ReadOptions, analyze, file_digest, format_table, read_wide_csv, result_payload
from .simulate import Scenario, format_report_table, run_study

__all__ = ["build_parser", "main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="winprob",
        description="Landmark win probability estimation for two-arm longitudinal trials.",
    )
    parser.add_argument("--version", action="version", version=f"winprob {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="estimate win probabilities for one trial")
    source = pa.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", metavar="CSV", help="wide-format trial file")
    source.add_argument("--builtin", choices=["epds"], help="bundled example dataset")
    pa.add_argument(
        "--method", choices=["gpc", "cca", "mmrm", "all"], default="all",
        help="estimation method (default: all three)",
    )
    pa.add_argument(
        "--direction", choices=["higher", "lower"], default=None,
        help="which scores win (default: higher; the builtin switches to lower)",
    )
    pa.add_argument("--alpha", type=float, default=0.05, help="two-sided level (default 0.05)")
    pa.add_argument(
        "--no-baseline-covariate", action="store_true",
        help="drop the baseline win fraction from the regressions",
    )
    pa.add_argument("--output", choices=["json", "table"], default="table")
    pa.add_argument("--out", metavar="PATH", help="write results to a file instead of stdout")
    pa.add_argument("--id-column", default="id", help="subject id column name (default 'id')")
    pa.add_argument("--arm-column", default="trt", help="arm column name (default 'trt')")
    pa.add_argument(
        "--baseline-column", default=None, metavar="NAME",
        help="baseline column ('none' for trials without one; default: first measurement column)",
    )

    ps = sub.add_parser("simulate", help="run one Monte Carlo scenario")
    ps.add_argument("--trajectory", type=int, choices=[1, 2, 3, 4], required=True)
    ps.add_argument("--mechanism", choices=["none", "mcar", "mar", "mnar"], required=True)
    ps.add_argument(
        "--case", type=int, choices=[1, 2, 3, 4], default=None,
        help="deletion combination for mar/mnar mechanisms",
    )
    ps.add_argument("--method", choices=["gpc", "cca", "mmrm"], required=True)
    ps.add_argument("--reps", type=int, default=1000)
    ps.add_argument("--seed", type=int, default=1)
    ps.add_argument("--n0", type=int, default=50)
    ps.add_argument("--n1", type=int, default=50)
    ps.add_argument("--alpha", type=float, default=0.05)
    ps.add_argument("--no-baseline-covariate", action="store_true")
    ps.add_argument(
        "--threads", type=int, default=None,
        help="worker threads (default: WINPROB_THREADS or one per CPU)",
    )
    ps.add_argument("--output", choices=["json", "table"], default="table")
    ps.add_argument("--out", metavar="PATH")

    pc = sub.add_parser("convert", help="express a win probability as NB, WO, and SMD")
    pc.add_argument("--theta", type=float, required=True)

    return parser


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_analyze(args: argparse.Namespace) -> int:
    if args.builtin:
        data = embedded_epds()
        digest = hashlib.sha256(canonical_text().encode("utf-8")).hexdigest()
        if args.direction is not None:
            data = data.with_direction(Direction.from_label(args.direction))
    else:
        baseline = args.baseline_column
        if baseline is None:
            baseline = INFER_BASELINE
        elif baseline == "none":
            baseline = None
        options = ReadOptions(
            id_column=args.id_column,
            arm_column=args.arm_column,
            baseline_column=baseline,
            direction=Direction.from_label(args.direction or "higher"),
        )
        data = read_wide_csv(args.input, options)
        digest = file_digest(args.input)

    methods = ["gpc", "cca", "mmrm"] if args.method == "all" else [args.method]
    results = [
        analyze(data, m, args.alpha, not args.no_baseline_covariate, digest)
        for m in methods
    ]
    for result in results:
        for message in result.warnings:
            print(f"warning [{result.method}]: {message}", file=sys.stderr)

    if args.output == "json":
        payload = (
            result_payload(results[0])
            if len(results) == 1
            else [result_payload(r) for r in results]
        )
        text = json.dumps(payload, indent=2) + "\n"
    else:
        text = "".join(
            format_table(r, header=(i == 0)) for i, r in enumerate(results)
        )
    _emit(text, args.out)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = Scenario(args.trajectory, args.mechanism, args.case, args.n0, args.n1)
    report = run_study(
        scenario,
        args.method,
        args.reps,
        args.seed,
        alpha=args.alpha,
        baseline_covariate=not args.no_baseline_covariate,
        threads=args.threads,
    )
    if report.n_failed:
        print(f"warning: {report.n_failed} replicate(s) failed", file=sys.stderr)
    if report.n_degenerate:
        print(
            f"warning: {report.n_degenerate} replicate(s) gave degenerate estimates",
            file=sys.stderr,
        )
    if args.output == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    else:
        text = format_report_table([report])
    _emit(text, args.out)
    return 0


def _cmd_convert(args: argparse.Namespace) -> int:
    if not 0.0 < args.theta < 1.0:
        raise InputError(f"theta must lie strictly between 0 and 1, got {args.theta}")
    c = convert_effects(args.theta)
    print(f"NB={c.net_benefit:g} WO={c.win_odds:g} SMD={c.smd_equivalent:g}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_convert(args)
    except WinprobError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
