"""Command-line entry point: ``coopnav run|replay|validate-scenario``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    Episode,
    RunConfig,
    TraceError,
    parse_crash_schedule,
    replay,
    validate_scenario,
)
from .harness.episode import write_outputs
from .oracle import OracleError
from .world import ScenarioError


def _run(args) -> int:
    cfg = RunConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.oracle is not None:
        changes["oracle"] = args.oracle
    if args.crash is not None:
        changes["crash"] = parse_crash_schedule(args.crash)
    if args.out is not None:
        changes["output_dir"] = args.out
    cfg = dataclasses.replace(cfg, **changes)
    out = cfg.output_dir or "coopnav-out"
    episode = Episode(cfg)
    report = episode.run()
    paths = write_outputs(episode, report, out)
    for t in report.targets:
        print(f"{t.target}\t{t.result}\t{'' if t.tick is None else t.tick}\t{'' if t.agent is None else t.agent}")
    print(
        f"successes {report.successes}/{len(report.targets)} in {report.ticks} ticks; "
        f"messages {report.total_messages} (broadcast baseline {report.broadcast_baseline}); "
        f"handoffs {report.handoffs}; recoveries {report.recoveries}"
    )
    print(f"outputs in {Path(out)}: " + ", ".join(p.name for p in paths.values()))
    return 0


def _replay(args) -> int:
    result = replay(args.trace, plot=args.plot)
    sys.stdout.write(result.text() if args.timeline else "\n".join(result.text().splitlines()[:5]) + "\n")
    ok = not result.map_mismatches and result.verdicts_match
    return 0 if ok else 1


def _validate(args) -> int:
    diags = validate_scenario(args.path)
    for d in diags:
        print(d)
    if not diags:
        print(f"{args.path}: clean")
    return 0 if not diags else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coopnav", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--oracle", choices=("rule", "remote"))
    run.add_argument("--crash", help='crash schedule, e.g. "0:50,leader:80"')
    run.add_argument("--out", help="output directory (overrides the config)")
    run.set_defaults(func=_run)

    rep = sub.add_parser("replay", help="verify and replay a trace")
    rep.add_argument("trace")
    rep.add_argument("--plot", help="write a trajectory PNG here")
    rep.add_argument("--timeline", action="store_true", help="print the per-tick timeline")
    rep.set_defaults(func=_replay)

    val = sub.add_parser("validate-scenario", help="check a scenario file")
    val.add_argument("path")
    val.set_defaults(func=_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, TraceError, OracleError, OSError) as exc:
        diags = getattr(exc, "diagnostics", None)
        print(f"error: {exc}", file=sys.stderr)
        for d in diags or ():
            print(f"  {d}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
