#!/usr/bin/env python3
"""
Benchmark validation script for CI/CD pipeline.
Runs a scaling scenario and checks the fitted log-log slopes against their theoretical values.
"""

import argparse
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import structlog

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ifkernel.core.config import settings  # noqa: E402
from ifkernel.core.errors import IFKernelError  # noqa: E402
from ifkernel.core.io import read_json, write_json  # noqa: E402
from ifkernel.core.logging import setup_logging  # noqa: E402
from ifkernel.schemas.requests import BenchmarkScenario  # noqa: E402
from ifkernel.services.benchmark import run_benchmark  # noqa: E402

logger = structlog.get_logger(__name__)

DEFAULT_SCENARIO = {
    "name": "smoothing_scaling",
    "kind": "smoothing",
    "sample_counts": [256, 512, 1024, 2048, 4096],
    "snr_db": [20.0],
    "replications": 10,
    "seed": 7,
    "q": 0,
    "p": 2,
}


def check_slopes(report: dict, slope_tolerance: float) -> list:
    """Compare every fitted slope with its expected value; returns one record per metric and SNR."""
    checks = []
    for snr, fitted in report["slopes"].items():
        for metric, expected in report["expected_slopes"].items():
            value = fitted.get(metric)
            passed = value is not None and abs(value - expected) <= slope_tolerance
            checks.append({"snr": snr, "metric": metric, "fitted": value, "expected": expected, "passed": passed})
    return checks


def validate_benchmark(scenario: BenchmarkScenario, slope_tolerance: float, output_dir: Path,
                       report_path: Path) -> bool:
    """Run the scenario and write the validation report"""
    logger.info("validation_started", scenario=scenario.name, kind=scenario.kind, slope_tolerance=slope_tolerance)
    try:
        report = run_benchmark(scenario, output_dir)
    except IFKernelError as exc:
        logger.error("validation_error", error=type(exc).__name__, detail=exc.detail)
        return False

    checks = check_slopes(report, slope_tolerance)
    bounds = report.get("bound_checks", [])
    trends = report.get("trend_checks", [])
    every = checks + bounds + trends
    passed = bool(every) and all(check["passed"] for check in every)
    for event, records in (("slope_check", checks), ("bound_check", bounds), ("trend_check", trends)):
        for check in records:
            log = logger.info if check["passed"] else logger.error
            log(event, **check)

    write_json(
        {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "passed": passed,
            "scenario": scenario.model_dump(mode="json"),
            "checks": checks,
            "bound_checks": bounds,
            "trend_checks": trends,
            "thresholds": {"slope_tolerance": slope_tolerance},
            "benchmark_dir": str(output_dir),
        },
        report_path,
    )
    logger.info("validation_report_saved", path=str(report_path), passed=passed)
    return passed


def print_report_summary(report_path: Path) -> None:
    """Print a formatted summary of the validation report"""
    if not report_path.is_file():
        logger.warning("report_not_found", path=str(report_path))
        return
    report = read_json(report_path)

    print("\n" + "=" * 50)
    print("  BENCHMARK VALIDATION REPORT")
    print("=" * 50)
    print(f"  Timestamp : {report['timestamp']}")
    print(f"  Scenario  : {report['scenario']['name']} ({report['scenario']['kind']})")
    print(f"  Result    : {'PASSED' if report['passed'] else 'FAILED'}")
    print()
    print("  Slopes:")
    for check in report["checks"]:
        fitted = "n/a" if check["fitted"] is None else f"{check['fitted']:+.3f}"
        print(f"    {check['snr']:>8} {check['metric']:<15} {fitted}  (expected {check['expected']:+.3f})")
    if report.get("bound_checks"):
        print()
        print("  Bounds:")
        for check in report["bound_checks"]:
            status = "ok" if check["passed"] else "FAIL"
            print(f"    {check['cell']:<28} {check['metric']:<22} {check['value']}  {check['bound']}  {status}")
    for check in report.get("trend_checks", []):
        status = "ok" if check["passed"] else "FAIL"
        print(f"  Trend {check['metric']}: {check['first']:.3f} -> {check['last']:.3f}  {status}")
    print("=" * 50 + "\n")


def main():
    parser = argparse.ArgumentParser(
        description="ifkernel benchmark validator",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--scenario",
        type=Path,
        default=None,
        help="JSON scenario file (default: (0,2) smoothing scaling sweep)",
    )
    parser.add_argument(
        "--slope-tolerance",
        type=float,
        default=0.1,
        help="Maximum allowed |fitted − expected| slope",
    )
    parser.add_argument(
        "--output-dir",
        type=Path,
        default=Path("./benchmark_results"),
        help="Directory for cell files and the benchmark report",
    )
    parser.add_argument(
        "--report",
        type=Path,
        default=Path("validation_report.json"),
        help="Validation report path",
    )
    parser.add_argument(
        "--summary",
        action="store_true",
        help="Print report summary after validation",
    )
    args = parser.parse_args()
    setup_logging(settings.LOG_LEVEL, settings.LOG_JSON)

    scenario = BenchmarkScenario.model_validate(read_json(args.scenario) if args.scenario else DEFAULT_SCENARIO)
    success = validate_benchmark(scenario, args.slope_tolerance, args.output_dir, args.report)

    if args.summary:
        print_report_summary(args.report)

    sys.exit(0 if success else 1)


if __name__ == "__main__":
    main()
