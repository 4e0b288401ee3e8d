"""benchmark: Monte Carlo scaling sweeps"""

import argparse
from pathlib import Path

import structlog

from ifkernel.commands.common import add_common_arguments, load_request
from ifkernel.core.errors import EXIT_OK
from ifkernel.core.io import read_json
from ifkernel.schemas.requests import BenchmarkRequest
from ifkernel.services.benchmark import run_benchmark

logger = structlog.get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "benchmark",
        help="run a benchmark scenario and fit log-log scaling slopes",
        description="--output names a directory receiving cells/<cell>.json, cells.csv and report.json. "
                    "The scenario comes from --scenario or the 'scenario' key of --config.",
    )
    add_common_arguments(parser)
    parser.add_argument("--scenario", type=Path, help="JSON file with one benchmark scenario")
    parser.add_argument("--jobs", type=int, help="parallel cells (default IFKERNEL_BENCHMARK_JOBS)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if getattr(args, "scenario", None) is not None:
        scenario = read_json(args.scenario)
        if args.seed is not None:
            scenario["seed"] = args.seed
        args.scenario = scenario
        args.seed = None
    request = load_request(BenchmarkRequest, args, ("scenario", "jobs"))

    report = run_benchmark(request.scenario, request.output, request.jobs)
    logger.info("benchmark_written", output=str(request.output), cells=len(report["cells"]))
    return EXIT_OK
