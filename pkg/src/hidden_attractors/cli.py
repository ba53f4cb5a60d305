"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime or integration
failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import BasinGrid, basin_scan
from .config import ALIASES, SCENARIOS, get_scenario, parse_config
from .core import ConfigError, ContractError, DomainError
from .integrator import IntegrationError
from .io import ArtifactIOError, atomic_write, run_scenario

logger = logging.getLogger("hidden_attractors")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


def _resolve(args):
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ArtifactIOError(args.config, exc.strerror or str(exc)) from exc
        spec = parse_config(text)
    elif args.scenario:
        spec = get_scenario(args.scenario)
    else:
        raise ConfigError("give a scenario id or --config FILE")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    for flag, key in (("radius", "radius"), ("probes", "n_probes")):
        if getattr(args, flag, None) is not None:
            changes[key] = getattr(args, flag)
    try:
        if args.t_end is not None:
            changes["integration"] = replace(spec.integration, t_end=args.t_end)
        return replace(spec, **changes) if changes else spec
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _print_report(name, report):
    means = ", ".join(f"{k}={v:.6g}" for k, v in report.tail_mean_velocities.items())
    period = f"{report.period_estimate:.6g} s" if report.period_estimate else "none"
    cls = report.classification or "unclassified"
    print(f"{name}: {report.kind} ({cls}); tail means {means}; "
          f"amplitude {report.amplitude:.6g}; period {period}")


def cmd_list(args):
    for sid, spec in SCENARIOS.items():
        print(f"{sid:18s} {spec.model:16s} {spec.description}")
    for alias, target in ALIASES.items():
        print(f"{alias:18s} alias of {target}")
    return EXIT_OK


def cmd_run(args, analyses=None):
    spec = _resolve(args)
    if analyses is not None:
        spec = replace(spec, analyses=analyses(spec))
    summary = run_scenario(spec, args.out_dir)
    for name, report in summary.reports.items():
        _print_report(name, report)
    if summary.sommerfeld_ratio is not None:
        print(f"sommerfeld ratio: {summary.sommerfeld_ratio:.6g}")
    print(f"wrote {', '.join(summary.artifacts.values())} to {args.out_dir}")
    return EXIT_OK


def _classify_analyses(spec):
    analyses = tuple(a for a in spec.analyses if a != "basin")
    return analyses if "classify" in analyses else analyses + ("classify",)


def cmd_classify(args):
    return cmd_run(args, _classify_analyses)


def cmd_scan(args):
    spec = _resolve(args)
    if spec.basin is None:
        raise ConfigError(f"scenario {spec.id!r} defines no basin grid; use a config with basin_axes")
    grid = spec.basin
    if args.resolution is not None:
        grid = BasinGrid(tuple(replace(a, n=args.resolution) for a in grid.axes), grid.fixed)
    basin = basin_scan(spec.build(), grid, spec.integration, spec.workers,
                       tail_fraction=spec.tail_fraction)
    path = Path(args.out_dir) / f"{spec.id}.basin.json"
    atomic_write(path, json.dumps(basin.to_dict(), indent=2, allow_nan=False) + "\n")
    for k, att in enumerate(basin.attractors):
        count = int((basin.labels == k).sum())
        _print_report(f"label {k} ({count} cells)", att)
    print(f"unresolved cells: {int((basin.labels < 0).sum())}")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hidden-attractors",
        description="Hidden and self-excited attractors in nonsmooth electromechanical systems.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", nargs="?", help="built-in scenario id (see 'list')")
    common.add_argument("--config", help="scenario config file")
    common.add_argument("--out-dir", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="probe seed")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--t-end", type=float, help="integration horizon in seconds")

    sub.add_parser("list", help="list built-in scenarios").set_defaults(func=cmd_list)
    sub.add_parser("run", parents=[common], help="run a scenario").set_defaults(func=cmd_run)
    p = sub.add_parser("classify", parents=[common], help="classify a scenario's attractor")
    p.add_argument("--radius", type=float, help="probe radius in normalised units")
    p.add_argument("--probes", type=int, help="probes per equilibrium")
    p.set_defaults(func=cmd_classify)
    p = sub.add_parser("scan", parents=[common], help="basin-of-attraction scan")
    p.add_argument("--resolution", type=int, help="cells per axis (overrides the grid)")
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactIOError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (IntegrationError, DomainError, ContractError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
