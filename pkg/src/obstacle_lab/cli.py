"""Command line front end.

Subcommands:
  solve      run a scenario's solver only and write the solution files
  analyze    run the full analysis pipeline (default analyses per scenario)
  stratify   run solve + free boundary extraction + stratification only
  study      refinement study across doubling resolutions
  list       print the scenario registry

Exit status: 0 all checks passed, 1 at least one check failed,
2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, ObstacleLabError
from .runner import list_scenarios, refinement_study, run_scenario
from .scenarios import RunOptions, get_scenario, parse_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obstacle-lab",
        description="Obstacle problem laboratory: solve, classify, stratify.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_scenario=True):
        if needs_scenario:
            p.add_argument("scenario", nargs="?", default=None,
                           help="builtin scenario name (or use --config)")
        p.add_argument("--config", default=None,
                       help="path to a JSON scenario config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--resolution", type=int, default=None,
                       help="override grid cells per axis")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for stratification")
        p.add_argument("--seed", type=int, default=None,
                       help="seed recorded in provenance")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="tabular output format")

    add_common(sub.add_parser("solve", help="solve only"))
    add_common(sub.add_parser("analyze", help="full analysis pipeline"))
    add_common(sub.add_parser("stratify", help="solve and stratify"))
    study = sub.add_parser("study", help="refinement study")
    add_common(study)
    study.add_argument("--levels", type=int, default=3,
                       help="number of doubling resolutions (>= 2)")
    sub.add_parser("list", help="list registered scenarios")
    return parser


def _load(args) -> tuple:
    if args.config is not None:
        scenario, options = parse_config(args.config)
    elif args.scenario is not None:
        scenario = get_scenario(args.scenario)
        options = RunOptions(resolutions=(scenario.cells,),
                             analyses=scenario.analyses)
    else:
        raise ConfigError("scenario: provide a scenario name or --config")

    updates = {}
    if args.resolution is not None:
        if args.resolution < 8:
            raise ConfigError("resolution: must be at least 8")
        updates["resolutions"] = (args.resolution,)
    if args.out is not None:
        updates["out"] = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("threads: must be >= 1")
        updates["threads"] = args.threads
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.format is not None:
        updates["format"] = args.format
    if updates:
        options = RunOptions(
            resolutions=updates.get("resolutions", options.resolutions),
            solver=options.solver,
            analyses=options.analyses,
            out=updates.get("out", options.out),
            seed=updates.get("seed", options.seed),
            threads=updates.get("threads", options.threads),
            format=updates.get("format", options.format),
            radii=options.radii,
        )
    return scenario, options


def _restrict(options: RunOptions, keep: tuple) -> RunOptions:
    analyses = tuple(a for a in options.analyses if a in keep)
    return RunOptions(resolutions=options.resolutions, solver=options.solver,
                      analyses=analyses, out=options.out, seed=options.seed,
                      threads=options.threads, format=options.format,
                      radii=options.radii)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, desc in list_scenarios():
                print(f"{name:24s} {desc}")
            return 0

        scenario, options = _load(args)
        if args.command == "solve":
            options = _restrict(options, ("solve", "residuals"))
        elif args.command == "stratify":
            options = _restrict(options, ("solve", "residuals", "stratify"))

        if args.command == "study":
            if args.levels < 2:
                raise ConfigError("levels: must be >= 2")
            table = refinement_study((scenario, options), levels=args.levels)
            print(table.summary())
            if options.out:
                from pathlib import Path

                outdir = Path(options.out)
                outdir.mkdir(parents=True, exist_ok=True)
                table.to_csv(outdir / "study.csv")
                if options.format == "json":
                    table.to_json(outdir / "study.json")
            return 0

        result = run_scenario((scenario, options))
        for check in result.checks:
            verdict = "PASS" if check.passed else "FAIL"
            print(f"[{verdict}] {check.name}: {check.detail}")
        if result.outdir is not None:
            print(f"outputs written to {result.outdir}")
        if not result.ok:
            failures = [c.name for c in result.checks if not c.passed]
            print(json.dumps({"failed_checks": failures}))
        return result.exit_status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ObstacleLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
