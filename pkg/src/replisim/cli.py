"""Command line entry points: run, compare, verify.

Exit codes: 0 on success, 1 for an invalid scenario file, 2 for failed
verification or a run that did not converge.
"""

from __future__ import annotations

import argparse
import sys

from . import report as report_mod
from .errors import ScenarioError
from .scenario import compare_scenario, load_scenario, run_scenario
from .verify import run_many


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replisim",
        description="Deterministic multimaster replication simulator",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress notes")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and print its metrics report")
    run_p.add_argument("scenario", help="scenario file path")
    run_p.add_argument("--seed", type=int, default=None, help="override the workload seed")
    run_p.add_argument("--max-ticks", type=int, default=None, help="override the tick budget")
    run_p.add_argument("--outdir", default=None, help="also write report.txt and figures here")

    cmp_p = sub.add_parser("compare", help="run the scenario once per addition method")
    cmp_p.add_argument("scenario", help="scenario file path (needs an add_site event)")
    cmp_p.add_argument("--seed", type=int, default=None, help="override the workload seed")
    cmp_p.add_argument("--outdir", default=None, help="also write report.txt and figures here")

    ver_p = sub.add_parser("verify", help="randomized overlay transparency checks")
    ver_p.add_argument("--seeds", type=int, default=20, help="number of seeds (default 20)")
    ver_p.add_argument(
        "--statements", type=int, default=200, help="statements per seed (default 200)"
    )
    return parser


def _emit(text: str, outdir: str | None, figures_fn, quiet: bool) -> None:
    sys.stdout.write(text)
    if outdir:
        path = report_mod.write_report_file(text, outdir)
        written = figures_fn(outdir)
        if not quiet:
            for item in [path] + written:
                sys.stderr.write(f"wrote {item}\n")


def main(argv: list | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "verify":
        outcomes = run_many(args.seeds, args.statements)
        for outcome in outcomes:
            print(outcome.line())
        failed = [o for o in outcomes if not o.ok]
        print(f"{len(outcomes) - len(failed)}/{len(outcomes)} seeds ok")
        return 2 if failed else 0

    try:
        scenario = load_scenario(args.scenario)
        if args.command == "run":
            outcome = run_scenario(
                scenario, seed=args.seed, max_ticks=getattr(args, "max_ticks", None)
            )
            text = report_mod.run_report(outcome)
            _emit(text, args.outdir, lambda d: report_mod.save_run_figures(outcome, d), args.quiet)
            return 0 if outcome.metrics.converged else 2
        outcomes = compare_scenario(scenario, seed=args.seed)
        text = report_mod.compare_report(outcomes)
        _emit(text, args.outdir, lambda d: report_mod.save_compare_figures(outcomes, d), args.quiet)
        return 0 if all(o.metrics.converged for o in outcomes) else 2
    except ScenarioError as exc:
        sys.stderr.write(f"scenario error: {exc}\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
