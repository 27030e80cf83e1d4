"""Command line interface: run a scenario, validate one, or replay a trace.

Exit status is 0 when the command completed and 1 with a diagnostic on
stderr for validation failures.
"""

from __future__ import annotations

import argparse
import sys

from .engine import SECOND
from .scenario import ScenarioError, load_scenario
from .simulation import Simulation
from .summary import build_summary


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wfdsim",
        description="Discrete-event simulator for Wi-Fi Direct group "
                    "networking with a multi-hop routing layer.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and print its summary")
    run_p.add_argument("scenario",
                       help="path to a scenario file, or a bundled name "
                            "(chain4, gc_pair, two_groups_bridge, "
                            "mobility_break)")
    run_p.add_argument("--seed", type=int, help="override the scenario seed")
    run_p.add_argument("--until", type=float, metavar="SECONDS",
                       help="override the simulated duration")
    run_p.add_argument("--trace", metavar="PATH",
                       help="write the trace to this file")
    run_p.add_argument("--summary", metavar="PATH",
                       help="write the summary to this file as well")
    run_p.add_argument("--strict", action="store_true", default=True,
                       help="reject unknown scenario fields (the default)")

    val_p = sub.add_parser("validate", help="check a scenario file")
    val_p.add_argument("scenario")
    val_p.add_argument("--strict", action="store_true", default=True)

    rep_p = sub.add_parser("replay",
                           help="recompute the summary from a trace file")
    rep_p.add_argument("trace")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            load_scenario(args.scenario, strict=args.strict)
            print("ok")
            return 0
        if args.command == "replay":
            with open(args.trace, "r", encoding="utf-8") as fh:
                print(build_summary(fh).to_text(), end="")
            return 0
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario, strict=args.strict)
    if args.seed is not None:
        scenario.sim.seed = args.seed
    if args.until is not None:
        scenario.sim.duration_us = int(args.until * SECOND)
    sim = Simulation(scenario)
    summary = sim.run()
    if args.trace:
        sim.trace.write(args.trace)
    text = summary.to_text()
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
