"""Command-line interface.

    rollupsim scenario run demo.json --seed 7
    rollupsim bench --chunks 390 --aggregate 8 --mix transfer=70,deposit=30
    rollupsim compare-changegroup --token erc20
    rollupsim report --format csv -o costs.csv --figures
    rollupsim --gas-config custom.json ...
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from .bench import DEFAULT_MIX, bench_cell, parse_mix
from .gasmodel import GasConfig, default_gas_config, load_gas_config
from .pipeline import AGGREGATION_FACTORS, BLOCK_CAPACITIES
from .reporting import (
    compare_changegroup,
    cycle_rows_to_csv,
    emit_report,
    gas_rows_to_csv,
    model_cost_report,
    report_to_text,
)
from .scenario import run_scenario
from .types import RollupError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rollupsim",
        description="Multi-group rollup engine and layer-1 cost simulator.",
    )
    parser.add_argument(
        "--gas-config",
        metavar="FILE",
        help="JSON file overriding the gas constants",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    scenario = sub.add_parser("scenario", help="run a JSON scenario file")
    scenario_sub = scenario.add_subparsers(dest="scenario_command", required=True)
    scenario_run = scenario_sub.add_parser("run", help="execute a scenario")
    scenario_run.add_argument("file", help="scenario JSON file")
    scenario_run.add_argument("--seed", type=int, default=None)
    scenario_run.add_argument(
        "-o", "--output", metavar="PATH", help="write cycle rows as CSV"
    )
    scenario_run.add_argument(
        "--gas-csv", metavar="PATH", help="write the contract gas ledger as CSV"
    )

    bench = sub.add_parser("bench", help="run one benchmark cell")
    bench.add_argument(
        "--chunks", type=int, choices=BLOCK_CAPACITIES, default=390
    )
    bench.add_argument(
        "--aggregate", type=int, choices=AGGREGATION_FACTORS, default=8
    )
    bench.add_argument(
        "--mix",
        default=None,
        help="weights like transfer=55,deposit=10 (default: mixed workload)",
    )
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("-o", "--output", metavar="PATH", help="write report CSV")
    bench.add_argument("--figures", action="store_true", help="render a PNG chart")

    compare = sub.add_parser(
        "compare-changegroup",
        help="cross-group move vs the legacy withdraw-and-redeposit route",
    )
    compare.add_argument("--token", choices=("eth", "erc20"), default="eth")

    report = sub.add_parser("report", help="emit the modelled cost table")
    report.add_argument("--format", choices=("csv", "text"), default="csv")
    report.add_argument("-o", "--output", metavar="PATH", required=True)
    report.add_argument("--figures", action="store_true", help="render a PNG chart")
    report.add_argument(
        "--chunks", type=int, choices=BLOCK_CAPACITIES, default=390
    )
    report.add_argument(
        "--aggregate", type=int, choices=AGGREGATION_FACTORS, default=8
    )
    return parser


def _gas_config(args: argparse.Namespace) -> GasConfig:
    if args.gas_config:
        return load_gas_config(args.gas_config)
    return default_gas_config()


def _cmd_scenario(args: argparse.Namespace) -> int:
    result = run_scenario(args.file, seed=args.seed, gas_config=_gas_config(args))
    csv_text = cycle_rows_to_csv(result.cycle_rows)
    if args.output:
        Path(args.output).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    if args.gas_csv:
        Path(args.gas_csv).write_text(
            gas_rows_to_csv(result.contract.gas_report_rows())
        )
    print(f"state digest: {result.digest()}", file=sys.stderr)
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    mix = parse_mix(args.mix) if args.mix else dict(DEFAULT_MIX)
    result = bench_cell(
        capacity_chunks=args.chunks,
        aggregate_n=args.aggregate,
        mix=mix,
        gas_config=_gas_config(args),
        seed=args.seed,
    )
    if args.output:
        for written in emit_report(
            result.report, args.output, fmt="csv", figures=args.figures
        ):
            print(f"wrote {written}", file=sys.stderr)
    else:
        sys.stdout.write(report_to_text(result.report))
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    savings = compare_changegroup(args.token)
    print(f"changegroup_savings_{args.token} = {savings:.4f}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    report = model_cost_report(
        capacity_chunks=args.chunks,
        aggregate_n=args.aggregate,
        config=_gas_config(args),
    )
    for written in emit_report(
        report, args.output, fmt=args.format, figures=args.figures
    ):
        print(f"wrote {written}", file=sys.stderr)
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "scenario":
            return _cmd_scenario(args)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "compare-changegroup":
            return _cmd_compare(args)
        if args.command == "report":
            return _cmd_report(args)
    except (RollupError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
