"""Command-line frontend: run, pair, routes fetch, simulate, experiment.

Config precedence is defaults < config file < environment < flags. The
routing base URL can come from ``VELOMIX_ROUTING_URL``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .report import ConfigError, RunConfig, load_run_config, pair_report, run_pipeline
from .routing import RoutingError
from .simulate import EXPERIMENTS, run_experiment, write_fixture

ENV_ROUTING_URL = "VELOMIX_ROUTING_URL"


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trips", help="trip CSV path")
    parser.add_argument("--stations", help="station CSV path")
    parser.add_argument("--routes", help="route reference cache/fixture JSONL path")
    parser.add_argument("--routing-url", help="routing engine base URL")
    parser.add_argument("--offline", action="store_true", default=None,
                        help="serve route references from the fixture file only")
    parser.add_argument("--alpha", type=float, help="chi-square decision level")
    parser.add_argument("--seed", type=int, help="base seed for mixture restarts")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--parallelism", help="worker count or 'auto'")
    parser.add_argument("--config", help="JSON config file")


def _run_config(args: argparse.Namespace, **extra) -> RunConfig:
    routing_url = args.routing_url or os.environ.get(ENV_ROUTING_URL)
    return load_run_config(
        args.config,
        trips=args.trips,
        stations=args.stations,
        routes=args.routes,
        routing_url=routing_url,
        offline=args.offline,
        alpha=args.alpha,
        seed=args.seed,
        out=args.out,
        parallelism=args.parallelism,
        **extra,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="velomix",
        description="Infer cycling route-choice behavior from trip durations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="full pipeline over a trip file")
    _add_common_flags(run_p)
    run_p.add_argument("--plot-data", action="store_true", default=None,
                       help="write per-pair histogram/pmf CSVs")

    pair_p = sub.add_parser("pair", help="detailed report for one station pair")
    _add_common_flags(pair_p)
    pair_p.add_argument("--origin", required=True)
    pair_p.add_argument("--dest", required=True)

    routes_p = sub.add_parser("routes", help="route reference utilities")
    routes_sub = routes_p.add_subparsers(dest="routes_command", required=True)
    fetch_p = routes_sub.add_parser(
        "fetch", help="fetch references for all analyzed pairs into the cache"
    )
    _add_common_flags(fetch_p)

    sim_p = sub.add_parser("simulate", help="emit synthetic fixture files")
    sim_p.add_argument("--scenario", required=True, help="scenario JSON path")
    sim_p.add_argument("--out", required=True, help="output directory")

    exp_p = sub.add_parser("experiment", help="run a named validation experiment")
    exp_p.add_argument("name", choices=EXPERIMENTS)
    exp_p.add_argument("--seed", type=int, default=0)
    exp_p.add_argument("--out", help="write the report JSON here")
    return parser


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _run_config(args, plot_data=args.plot_data)
            summary = run_pipeline(cfg)
            print(json.dumps(summary, sort_keys=True))
            return 0
        if args.command == "pair":
            cfg = _run_config(args)
            report, plot_rows = pair_report(cfg, args.origin, args.dest)
            out = Path(cfg.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            stem = f"pair_{args.origin}__{args.dest}"
            with open(out / f"{stem}.json", "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
            with open(out / f"{stem}_plot.csv", "w", encoding="utf-8", newline="") as fh:
                fh.write("minute,observed,single_pmf,mixture_pmf\n")
                for row in plot_rows:
                    fh.write(",".join(str(v) for v in row) + "\n")
            print(json.dumps(
                {
                    "behavior": report["classification"]["behavior"],
                    "leaf": report["classification"]["leaf"],
                    "p_first": report["classification"]["p_first"],
                    "notes": report["notes"],
                    "report": str(out / f"{stem}.json"),
                },
                sort_keys=True,
            ))
            return 0
        if args.command == "routes":
            cfg = _run_config(args)
            from .report import _load_inputs, _route_references

            stations, _, _, _, samples = _load_inputs(cfg)
            refs, ledger = _route_references(cfg, stations, samples)
            print(json.dumps(
                {"fetched": len(refs), "failed": len(ledger)}, sort_keys=True
            ))
            return 0 if not ledger else 1
        if args.command == "simulate":
            with open(args.scenario, "r", encoding="utf-8") as fh:
                scenario = json.load(fh)
            summary = write_fixture(scenario, args.out)
            print(json.dumps(summary, sort_keys=True))
            return 0
        if args.command == "experiment":
            report = run_experiment(args.name, seed=args.seed)
            payload = report.to_dict()
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    json.dump(payload, fh, indent=2, sort_keys=True)
                    fh.write("\n")
            print(json.dumps(payload, sort_keys=True))
            return 0 if report.passed else 1
    except ConfigError as exc:
        return _fail(exc, 2)
    except (RoutingError, ValueError, RuntimeError, OSError) as exc:
        return _fail(exc, 1)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    raise SystemExit(main())
