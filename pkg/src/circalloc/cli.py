"""Command-line entry point: generate datasets, run allocations, evaluate strategies.

Every run writes a manifest (arguments, config snapshot, artifact hashes,
stage timings) sufficient to reproduce it exactly; all randomness flows from
explicit seeds.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from datetime import date, datetime
from pathlib import Path

from . import __version__, dataio
from .datagen import GenConfig, generate
from .engine import EngineConfig, run_to_termination
from .geo import UnknownPostcodeError
from .metrics import (STRATEGIES, comparison_table, compute_metrics,
                      run_strategy_suite, summary_lines)
from .milp import MilpConfig
from .model import Weights

log = logging.getLogger("circalloc.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SOLVER = 3
GOOD_STATUSES = {"OPTIMAL", "EMPTY"}


def _configure_logging() -> None:
    level_name = os.environ.get("CIRCALLOC_LOG", "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, config: dict, inputs: dict[str, Path],
                    artifacts: dict[str, Path], timings: dict[str, float]) -> Path:
    manifest = {
        "tool": {"name": "circalloc", "version": __version__},
        "command": sys.argv,
        "config": config,
        "inputs": {name: _sha256(path) for name, path in sorted(inputs.items())},
        "artifacts": {name: _sha256(path) for name, path in sorted(artifacts.items())},
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    path = out_dir / "manifest.json"
    dataio.write_json(path, manifest)
    return path


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {raw}")
    return value


def _iso_date(raw: str) -> date:
    try:
        return datetime.strptime(raw, "%Y-%m-%d").date()
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circalloc",
        description="Weighted-sum MILP allocation for perishable-food trading.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a seeded synthetic dataset")
    gen.add_argument("--seed", type=int, default=GenConfig.seed)
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--orders", type=_positive_int, default=GenConfig.n_orders)
    gen.add_argument("--offers", type=_positive_int, default=GenConfig.n_offers)

    def add_allocate_args(p: argparse.ArgumentParser, strategies_fixed: bool) -> None:
        p.add_argument("--offers", type=Path, required=True, metavar="F")
        p.add_argument("--orders", type=Path, required=True, metavar="F")
        p.add_argument("--postcodes", type=Path, required=True, metavar="F")
        if not strategies_fixed:
            group = p.add_mutually_exclusive_group(required=True)
            group.add_argument("--weights", type=Path,
                               help="JSON file with price/quantity/expiry/distance weights")
            group.add_argument("--strategy", choices=sorted(STRATEGIES))
            group.add_argument("--all-strategies", action="store_true")
        p.add_argument("--top-k", type=_positive_int, default=250)
        p.add_argument("--max-iters", type=_positive_int, default=5)
        p.add_argument("--seed-date", type=_iso_date, default=date(2025, 10, 13),
                       help="scenario reference date (YYYY-MM-DD)")
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--no-figures", action="store_true",
                       help="skip rendering report figures")

    alloc = sub.add_parser("allocate", help="run the allocation pipeline")
    add_allocate_args(alloc, strategies_fixed=False)

    ev = sub.add_parser("evaluate",
                        help="run all seven priority strategies (allocate --all-strategies)")
    add_allocate_args(ev, strategies_fixed=True)
    return parser


def _resolve_weights(args: argparse.Namespace) -> dict[str, Weights]:
    if getattr(args, "all_strategies", False) or args.command == "evaluate":
        return dict(STRATEGIES)
    if getattr(args, "strategy", None):
        return {args.strategy: STRATEGIES[args.strategy]}
    with open(args.weights) as handle:
        mapping = json.load(handle)
    return {"custom": Weights.from_mapping(mapping, normalize=True)}


def cmd_generate(args: argparse.Namespace) -> int:
    config = GenConfig(seed=args.seed, n_orders=args.orders, n_offers=args.offers)
    timings: dict[str, float] = {}
    started = time.perf_counter()
    dataset = generate(config)
    timings["generate"] = time.perf_counter() - started

    started = time.perf_counter()
    args.out.mkdir(parents=True, exist_ok=True)
    paths = dataio.write_dataset(args.out, dataset)
    timings["write"] = time.perf_counter() - started

    snapshot = {"seed": config.seed, "n_orders": config.n_orders,
                "n_offers": config.n_offers,
                "total_demand_t": config.total_demand,
                "total_supply_t": config.total_supply}
    _write_manifest(args.out, snapshot, {}, {p.name: p for p in paths.values()},
                    timings)
    print(f"wrote {len(dataset.offers)} offers, {len(dataset.orders)} orders, "
          f"{len(dataset.postcodes)} postcodes to {args.out}")
    return EXIT_OK


def cmd_allocate(args: argparse.Namespace) -> int:
    strategies = _resolve_weights(args)
    timings: dict[str, float] = {}

    started = time.perf_counter()
    offers = dataio.read_offers_csv(args.offers)
    orders = dataio.read_orders_csv(args.orders)
    index = dataio.read_postcodes_csv(args.postcodes)
    timings["load"] = time.perf_counter() - started

    engine_config = EngineConfig(
        reference_date=args.seed_date,
        max_iterations=args.max_iters,
        milp=MilpConfig(top_k=args.top_k),
    )

    args.out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}
    suites = {}
    all_ok = True

    multi = len(strategies) > 1
    for name, weights in strategies.items():
        started = time.perf_counter()
        result = run_to_termination(offers, orders, weights, engine_config, index)
        timings[f"solve[{name}]"] = time.perf_counter() - started
        suite = compute_metrics(result, offers, orders, strategy=name, weights=weights)
        suites[name] = (suite, result)
        all_ok &= all(rec.solver_status in GOOD_STATUSES for rec in result.iterations)

        run_dir = args.out / name if multi else args.out
        run_dir.mkdir(parents=True, exist_ok=True)
        alloc_path = run_dir / "allocations.csv"
        diag_path = run_dir / "diagnostics.jsonl"
        dataio.write_allocations_csv(alloc_path, result.flows)
        dataio.write_diagnostics_jsonl(diag_path, result)
        prefix = f"{name}/" if multi else ""
        artifacts[f"{prefix}allocations.csv"] = alloc_path
        artifacts[f"{prefix}diagnostics.jsonl"] = diag_path

    started = time.perf_counter()
    metrics_path = args.out / "metrics.json"
    dataio.write_json(metrics_path, {
        "strategies": {name: suite.to_dict() for name, (suite, _) in suites.items()}})
    artifacts["metrics.json"] = metrics_path
    if multi:
        comparison_path = args.out / "comparison.csv"
        table = comparison_table({name: suite for name, (suite, _) in suites.items()})
        with open(comparison_path, "w", newline="") as handle:
            csv.writer(handle).writerows(table)
        artifacts["comparison.csv"] = comparison_path
    timings["reports"] = time.perf_counter() - started

    if not args.no_figures:
        started = time.perf_counter()
        from . import viz
        if multi:
            artifacts["fig_comparison.png"] = viz.render_comparison_figure(
                {name: suite for name, (suite, _) in suites.items()},
                args.out / "fig_comparison.png")
        for name, (_, result) in suites.items():
            run_dir = args.out / name if multi else args.out
            fig_path = viz.render_run_figure(result.flows, run_dir / "fig_flows.png")
            artifacts[(f"{name}/" if multi else "") + "fig_flows.png"] = fig_path
        timings["figures"] = time.perf_counter() - started

    config_snapshot = {
        "strategies": {name: {"price": w.price, "quantity": w.quantity,
                              "expiry": w.expiry, "distance": w.distance}
                       for name, w in strategies.items()},
        "top_k": args.top_k,
        "max_iterations": args.max_iters,
        "reference_date": args.seed_date.isoformat(),
        "milp": {"screen_epsilon": engine_config.milp.screen_epsilon,
                 "rel_gap": engine_config.milp.rel_gap,
                 "node_limit": engine_config.milp.node_limit},
    }
    inputs = {"offers.csv": args.offers, "orders.csv": args.orders,
              "postcodes.csv": args.postcodes}
    _write_manifest(args.out, config_snapshot, inputs, artifacts, timings)

    for line in summary_lines({name: suite for name, (suite, _) in suites.items()}):
        print(line)
    if not all_ok:
        print("warning: at least one iteration ended without proven optimality",
              file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args)
        return cmd_allocate(args)
    except dataio.RowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except UnknownPostcodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
