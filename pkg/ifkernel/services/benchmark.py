"""Monte Carlo sweeps over record length and noise level with log-log slope fits.

Cells (one per record length and SNR) run in parallel through joblib; every cell draws its
replications from its own spawned seed sequence so results do not depend on the job count.
"""

import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed

from ifkernel.core.config import settings
from ifkernel.core.io import write_frame_csv, write_json
from ifkernel.core.metrics import stage_timer
from ifkernel.schemas.estimate import HalfwidthMode, IFConfig, ToneSet
from ifkernel.schemas.kernel import KernelShape
from ifkernel.schemas.noise import White
from ifkernel.schemas.requests import BenchmarkScenario
from ifkernel.schemas.signal import SampledSignal
from ifkernel.services.adaptive import multistage_estimate
from ifkernel.services.if_estimator import DERIVATIVE_ORDER, estimate_if, if_predicted_loss
from ifkernel.services.kernel_design import design_window_kernel, kernel_constants
from ifkernel.services.multitone import estimate_multitone, leakage_envelope
from ifkernel.services.signal_lab import colored_noise
from ifkernel.services.smoothing import KernelFamily, expected_loss, smooth_series

logger = structlog.get_logger(__name__)

DEFAULT_HALFWIDTHS = np.geomspace(0.005, 0.3, 28)

# slopes of log(best h) and log(MSE) against log N predicted by the leading-order theory
EXPECTED_SLOPES = {
    "smoothing": lambda order: {"best_halfwidth": -1.0 / (2 * order.p + 1),
                                "mse": -2.0 * (order.p - order.q) / (2 * order.p + 1)},
    "if_halfwidth": lambda order: {"best_halfwidth": -1.0 / 7},
    "if_error": lambda order: {"mse": -4.0 / 7, "rmse": -2.0 / 7},
    "polynomial": lambda order: {},
    "multitone": lambda order: {},
    "adaptive": lambda order: {"mse": -2.0 * (order.p - order.q) / (2 * order.p + 1)},
}

# per-cell limits: joint multitone error against isolated lines, plug-in against oracle halfwidth
EXPECTED_BOUNDS = {
    "multitone": {"rmse_ratio": {"max": 3.0}, "taper_leakage_drop_db": {"min": 20.0}},
    "adaptive": {"efficiency_ratio": {"max": 2.0}},
}

# metrics that must not grow from the shortest to the longest record
EXPECTED_TRENDS = {
    "adaptive": ("efficiency_ratio",),
}


def _noise_variance(clean: np.ndarray, snr_db: Optional[float]) -> float:
    if snr_db is None:
        return 0.0
    return float(np.mean(clean ** 2) / 10 ** (snr_db / 10))


def _middle(times: np.ndarray) -> np.ndarray:
    return (times >= 0.25) & (times <= 0.75)


def _smoothing_truth(scenario: BenchmarkScenario, times: np.ndarray):
    """sin(2πt), its q-th and p-th derivatives."""
    q, p = scenario.q, scenario.p
    w = 2 * math.pi

    def derivative(k):
        return w ** k * np.sin(w * times + k * math.pi / 2)

    return derivative(0), derivative(q), derivative(p)


def _run_smoothing(scenario: BenchmarkScenario, n: int, snr_db, rngs) -> Dict[str, Any]:
    times = np.arange(n) / n
    clean, target, pth = _smoothing_truth(scenario, times)
    sigma2 = _noise_variance(clean, snr_db)
    halfwidths = np.asarray(scenario.halfwidths or DEFAULT_HALFWIDTHS)
    halfwidths = halfwidths[halfwidths * n >= scenario.p + 1]
    mask = _middle(times)
    errors = np.zeros(halfwidths.size)
    for rng in rngs:
        signal = SampledSignal.on_unit_grid(clean + np.sqrt(sigma2) * rng.standard_normal(n))
        for k, h in enumerate(halfwidths):
            estimate = smooth_series(signal, KernelFamily(scenario.order, float(h), scenario.shape))
            errors[k] += np.mean((estimate[mask] - target[mask]) ** 2)
    mse = errors / len(rngs)
    best = int(np.argmin(mse))

    # leading-order loss averaged over the middle half: bias² enters through the mean of (∂_t^p g)²
    grid = SampledSignal.on_unit_grid(clean)
    curvature_rms = float(np.sqrt(np.mean(pth[mask] ** 2)))
    predicted = np.array([
        expected_loss(KernelFamily(scenario.order, float(h), scenario.shape).window_kernel(grid, n // 2),
                      White(sigma2=sigma2), curvature_rms, n, float(h)).total
        for h in halfwidths
    ])
    return {
        "best_halfwidth": float(halfwidths[best]),
        "mse": float(mse[best]),
        "rmse": float(math.sqrt(mse[best])),
        "predicted_best_halfwidth": float(halfwidths[int(np.argmin(predicted))]),
        "predicted_mse": float(np.min(predicted)),
        "sweep": {"halfwidths": halfwidths, "mse": mse},
    }


def _run_polynomial(scenario: BenchmarkScenario, n: int, snr_db, rngs) -> Dict[str, Any]:
    times = np.arange(n) / n
    coefficients = np.asarray(scenario.polynomial, dtype=float)
    clean = np.polynomial.polynomial.polyval(times, coefficients)
    target = np.polynomial.polynomial.polyval(times, np.polynomial.polynomial.polyder(coefficients, scenario.q)) \
        if scenario.q else clean
    sigma2 = _noise_variance(clean, snr_db)
    halfwidth = float((scenario.halfwidths or [0.1])[0])
    total = 0.0
    for rng in rngs:
        signal = SampledSignal.on_unit_grid(clean + np.sqrt(sigma2) * rng.standard_normal(n))
        estimate = smooth_series(signal, KernelFamily(scenario.order, halfwidth, scenario.shape))
        total += np.mean((estimate - target) ** 2)
    mse = total / len(rngs)
    return {"halfwidth": halfwidth, "mse": float(mse), "rmse": float(math.sqrt(mse))}


def _tone_record(scenario: BenchmarkScenario, n: int, snr_db, rng):
    tone = scenario.tone_spec
    times = np.arange(n) / n
    clean = tone.signal_at(times)
    sigma2 = _noise_variance(clean, snr_db)
    noisy = clean + colored_noise(White(sigma2=sigma2), n, rng)
    return SampledSignal.on_unit_grid(noisy), tone, sigma2


def _run_if_halfwidth(scenario: BenchmarkScenario, n: int, snr_db, rngs) -> Dict[str, Any]:
    halfwidths = np.asarray(scenario.halfwidths or DEFAULT_HALFWIDTHS)
    halfwidths = halfwidths[(halfwidths * n >= DERIVATIVE_ORDER.p + 1) & (halfwidths <= 0.25)]
    errors = np.zeros(halfwidths.size)
    for rng in rngs:
        signal, tone, sigma2 = _tone_record(scenario, n, snr_db, rng)
        truth = tone.frequency_at(signal.times)
        mask = _middle(signal.times)
        for k, h in enumerate(halfwidths):
            config = IFConfig(initial_center_frequency=tone.center_frequency, halfwidth=float(h),
                              max_center_iterations=1, kernel_shape=scenario.shape)
            estimate = estimate_if(signal, config, White(sigma2=sigma2))
            errors[k] += np.mean((estimate.instantaneous_frequency[mask] - truth[mask]) ** 2)
    mse = errors / len(rngs)
    best = int(np.argmin(mse))
    return {
        "best_halfwidth": float(halfwidths[best]),
        "mse": float(mse[best]),
        "rmse": float(math.sqrt(mse[best])),
        "sweep": {"halfwidths": halfwidths, "mse": mse},
    }


def _run_if_error(scenario: BenchmarkScenario, n: int, snr_db, rngs) -> Dict[str, Any]:
    m2, c13 = kernel_constants(DERIVATIVE_ORDER, scenario.shape)
    total = 0.0
    predicted = None
    for rng in rngs:
        signal, tone, sigma2 = _tone_record(scenario, n, snr_db, rng)
        truth = tone.frequency_at(signal.times)
        mask = _middle(signal.times)
        third = float(np.sqrt(np.mean(np.abs(tone.demodulated_third_derivative(signal.times[mask])) ** 2)))
        phase_variance = sigma2 / (tone.amplitude ** 2 + sigma2)
        config = IFConfig(initial_center_frequency=tone.center_frequency, halfwidth_mode=HalfwidthMode.OPTIMAL,
                          third_derivative=third, max_center_iterations=1, kernel_shape=scenario.shape)
        estimate = estimate_if(signal, config, White(sigma2=sigma2))
        total += np.mean((estimate.instantaneous_frequency[mask] - truth[mask]) ** 2)
        predicted = if_predicted_loss(phase_variance, n, third, m2, c13)
    mse = total / len(rngs)
    return {"mse": float(mse), "rmse": float(math.sqrt(mse)), "predicted_mse": predicted}


def _line_tones(scenario: BenchmarkScenario, n: int):
    """Two copies of the scenario tone at π/2 ∓ separation/2 rad/sample."""
    base = scenario.tone_spec
    return [base.model_copy(update={"center_frequency": (math.pi / 2 + sign * scenario.separation / 2) * n})
            for sign in (-1, 1)]


def _run_multitone(scenario: BenchmarkScenario, n: int, snr_db, rngs) -> Dict[str, Any]:
    times = np.arange(n) / n
    mask = _middle(times)
    lines = _line_tones(scenario, n)
    guard = scenario.separation * n / 4
    tones = ToneSet(center_frequencies=[line.center_frequency for line in lines], guard_bandwidth=guard)
    components = [line.signal_at(times) for line in lines]
    truths = [line.frequency_at(times) for line in lines]
    sigma2 = _noise_variance(components[0], snr_db)
    noise = White(sigma2=sigma2)
    third = float(np.sqrt(np.mean(np.abs(lines[0].demodulated_third_derivative(times[mask])) ** 2)))
    config = IFConfig(initial_center_frequency=lines[0].center_frequency, halfwidth_mode=HalfwidthMode.OPTIMAL,
                      third_derivative=third, kernel_shape=scenario.shape)

    joint = np.zeros(len(lines))
    isolated = np.zeros(len(lines))
    engaged = 0
    halfwidth = None
    for rng in rngs:
        draw = colored_noise(noise, n, rng)
        record = SampledSignal.on_unit_grid(sum(components) + draw)
        result = estimate_multitone(record, tones, config, noise, max_outer_iterations=scenario.outer_iterations)
        engaged += int(result.taper_engaged)
        for line, (component, truth) in enumerate(zip(components, truths)):
            joint[line] += np.mean((result.estimates[line].instantaneous_frequency[mask] - truth[mask]) ** 2)
            alone = estimate_if(SampledSignal.on_unit_grid(component + draw),
                                config.model_copy(update={"initial_center_frequency": lines[line].center_frequency}),
                                noise)
            isolated[line] += np.mean((alone.instantaneous_frequency[mask] - truth[mask]) ** 2)
            halfwidth = float(np.median(alone.halfwidth_used))
    joint /= len(rngs)
    isolated /= len(rngs)

    # sidelobe level of a line sitting just beyond the guard band, optimal versus taper window
    nh = halfwidth * n
    reach = int(np.floor(nh + 1e-9))
    leak = (scenario.separation * n - guard) / n
    envelopes = {shape: leakage_envelope(design_window_kernel(DERIVATIVE_ORDER, shape, nh, reach, reach, float(n)),
                                         leak)
                 for shape in (KernelShape.OPTIMAL, KernelShape.TAPER)}
    mse = float(np.mean(joint))
    return {
        "mse": mse,
        "rmse": math.sqrt(mse),
        "isolated_rmse": float(math.sqrt(np.mean(isolated))),
        "rmse_ratio": float(np.max(np.sqrt(joint / isolated))),
        "line_rmse": np.sqrt(joint),
        "line_isolated_rmse": np.sqrt(isolated),
        "taper_engaged": engaged / len(rngs),
        "halfwidth": halfwidth,
        "taper_leakage_drop_db": float(20 * np.log10(envelopes[KernelShape.OPTIMAL] / envelopes[KernelShape.TAPER])),
    }


def _run_adaptive(scenario: BenchmarkScenario, n: int, snr_db, rngs) -> Dict[str, Any]:
    """Multistage plug-in halfwidths against the best fixed halfwidth of a sweep."""
    times = np.arange(n) / n
    clean, target, _ = _smoothing_truth(scenario, times)
    sigma2 = _noise_variance(clean, snr_db)
    halfwidths = np.asarray(scenario.halfwidths or DEFAULT_HALFWIDTHS)
    halfwidths = halfwidths[halfwidths * n >= scenario.p + 1]
    mask = _middle(times)
    plugin = 0.0
    sweep = np.zeros(halfwidths.size)
    for rng in rngs:
        signal = SampledSignal.on_unit_grid(clean + np.sqrt(sigma2) * rng.standard_normal(n))
        result = multistage_estimate(signal, scenario.q, shape=scenario.shape)
        plugin += np.mean((result.estimate[mask] - target[mask]) ** 2)
        for k, h in enumerate(halfwidths):
            estimate = smooth_series(signal, KernelFamily(scenario.order, float(h), scenario.shape))
            sweep[k] += np.mean((estimate[mask] - target[mask]) ** 2)
    mse = plugin / len(rngs)
    sweep /= len(rngs)
    best = int(np.argmin(sweep))
    return {
        "mse": float(mse),
        "rmse": float(math.sqrt(mse)),
        "oracle_mse": float(sweep[best]),
        "oracle_halfwidth": float(halfwidths[best]),
        "efficiency_ratio": float(mse / sweep[best]),
        "sweep": {"halfwidths": halfwidths, "mse": sweep},
    }


RUNNERS = {
    "smoothing": _run_smoothing,
    "polynomial": _run_polynomial,
    "if_halfwidth": _run_if_halfwidth,
    "if_error": _run_if_error,
    "multitone": _run_multitone,
    "adaptive": _run_adaptive,
}


def cell_name(scenario: BenchmarkScenario, n: int, snr_db) -> str:
    snr = "clean" if snr_db is None else f"{snr_db:g}dB"
    return f"{scenario.name}_N{n}_{snr}"


def run_cell(scenario: BenchmarkScenario, n: int, snr_db, seed_sequence: np.random.SeedSequence,
             cell_dir: Optional[Path] = None) -> Dict[str, Any]:
    """Run all replications of one cell; writes the cell JSON when ``cell_dir`` is given."""
    rngs = [np.random.default_rng(child) for child in seed_sequence.spawn(scenario.replications)]
    with stage_timer(f"benchmark_{scenario.kind}") as timing:
        result = RUNNERS[scenario.kind](scenario, n, snr_db, rngs)
    cell = {"name": cell_name(scenario, n, snr_db), "sample_count": n, "snr_db": snr_db,
            "replications": scenario.replications, **result}
    if cell_dir is not None:
        write_json(cell, Path(cell_dir) / f"{cell['name']}.json")
    logger.info("benchmark_cell_done", cell=cell["name"], rmse=cell.get("rmse"),
                processing_time_ms=timing["processing_time_ms"])
    return cell


def fit_slope(sample_counts: List[int], values: List[float]) -> Optional[float]:
    """Least-squares slope of log(value) against log(N)."""
    x = np.log(np.asarray(sample_counts, dtype=float))
    y = np.asarray(values, dtype=float)
    keep = np.isfinite(y) & (y > 0)
    if keep.sum() < 2:
        return None
    return float(np.polyfit(x[keep], np.log(y[keep]), 1)[0])


def _scalar_fields(cell: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in cell.items() if k != "sweep" and not isinstance(v, np.ndarray)}


def check_bounds(kind: str, cells: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """One record per cell and bounded metric."""
    checks = []
    for cell in cells:
        for metric, bound in EXPECTED_BOUNDS.get(kind, {}).items():
            value = cell.get(metric)
            passed = value is not None and np.isfinite(value) \
                and value <= bound.get("max", np.inf) and value >= bound.get("min", -np.inf)
            checks.append({"cell": cell["name"], "metric": metric, "value": value, "bound": bound,
                           "passed": bool(passed)})
    return checks


def check_trends(kind: str, frame: pd.DataFrame, snr_key: str) -> List[Dict[str, Any]]:
    """Compare each trend metric at the longest record with its value at the shortest."""
    checks = []
    ordered = frame.sort_values("sample_count")
    if len(ordered) < 2:
        return checks
    for metric in EXPECTED_TRENDS.get(kind, ()):
        first, last = float(ordered[metric].iloc[0]), float(ordered[metric].iloc[-1])
        checks.append({"snr": snr_key, "metric": metric, "first": first, "last": last,
                       "passed": bool(last <= first)})
    return checks


def summarize(scenario: BenchmarkScenario, cells: List[Dict[str, Any]]) -> Dict[str, Any]:
    frame = pd.DataFrame([_scalar_fields(cell) for cell in cells])
    slopes = {}
    trends = []
    for snr_db in scenario.snr_db:
        key = "clean" if snr_db is None else f"{snr_db:g}dB"
        subset = frame[frame["snr_db"].isna()] if snr_db is None else frame[frame["snr_db"] == snr_db]
        subset = subset.sort_values("sample_count")
        slopes[key] = {
            metric: fit_slope(subset["sample_count"].tolist(), subset[metric].tolist())
            for metric in ("best_halfwidth", "mse", "rmse") if metric in subset
        }
        trends.extend(check_trends(scenario.kind, subset, key))
    return {
        "scenario": scenario.model_dump(mode="json"),
        "cells": cells,
        "slopes": slopes,
        "expected_slopes": EXPECTED_SLOPES[scenario.kind](scenario.order),
        "expected_bounds": EXPECTED_BOUNDS.get(scenario.kind, {}),
        "bound_checks": check_bounds(scenario.kind, cells),
        "trend_checks": trends,
    }


def run_benchmark(scenario: BenchmarkScenario, output_dir: Optional[Path] = None,
                  jobs: Optional[int] = None) -> Dict[str, Any]:
    """Run every (N, SNR) cell of a scenario and fit log-log slopes.

    With ``output_dir`` the per-cell JSON files, ``report.json`` and ``cells.csv`` are written.
    """
    jobs = jobs or settings.BENCHMARK_JOBS
    grid = [(n, snr) for snr in scenario.snr_db for n in scenario.sample_counts]
    seeds = np.random.SeedSequence(scenario.seed).spawn(len(grid))
    cell_dir = None if output_dir is None else Path(output_dir) / "cells"
    logger.info("benchmark_started", scenario=scenario.name, kind=scenario.kind, cells=len(grid), jobs=jobs)

    cells = Parallel(n_jobs=jobs)(
        delayed(run_cell)(scenario, n, snr, seed, cell_dir) for (n, snr), seed in zip(grid, seeds)
    )
    report = summarize(scenario, cells)
    if output_dir is not None:
        output_dir = Path(output_dir)
        write_json(report, output_dir / "report.json")
        frame = pd.DataFrame([_scalar_fields(cell) for cell in cells])
        write_frame_csv(frame, output_dir / "cells.csv")
    logger.info("benchmark_complete", scenario=scenario.name, slopes=report["slopes"])
    return report
