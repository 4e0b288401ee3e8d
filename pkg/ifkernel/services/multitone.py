"""Iterative estimation of several slowly evolving sinusoids.

Each outer pass estimates every line on its corrected data set (the record minus the current
reconstructions of all other lines). Updates are Jacobi style so relabeling the lines only
permutes the outputs.
"""

import dataclasses
from typing import Dict, List, Mapping, Optional

import numpy as np
import structlog

from ifkernel.core.config import settings
from ifkernel.core.errors import MissingEstimateError, ToneSeparationError
from ifkernel.core.metrics import stage_timer
from ifkernel.schemas.estimate import IFConfig, IFEstimate, MultitoneResult, PhaseSource, ToneSet
from ifkernel.schemas.kernel import Kernel, KernelShape
from ifkernel.schemas.signal import SampledSignal
from ifkernel.services.if_estimator import DERIVATIVE_ORDER, estimate_if
from ifkernel.services.kernel_design import design_window_kernel, kernel_spectrum

logger = structlog.get_logger(__name__)


def validate_tone_set(tones: ToneSet) -> None:
    frequencies = np.sort(np.asarray(tones.center_frequencies, dtype=float))
    gaps = np.diff(frequencies)
    if np.any(gaps <= 2 * tones.guard_bandwidth):
        raise ToneSeparationError(
            f"line frequencies must be separated by more than 2·guard = {2 * tones.guard_bandwidth:.6g}, "
            f"smallest gap is {gaps.min():.6g}"
        )


def reconstruct_line(estimate: IFEstimate) -> np.ndarray:
    """Â(t)·cos(φ̂(t)) on the estimate's grid."""
    if estimate.phase is None:
        raise ValueError("estimate carries no phase track")
    return estimate.amplitude * np.cos(estimate.phase)


def corrected_dataset(signal: SampledSignal, reconstructions: Mapping[int, Optional[np.ndarray]],
                      exclude_line: int, line_count: int, frequencies: Optional[List[float]] = None) -> SampledSignal:
    """ỹ^(ℓ) = y − Σ_{ℓ′≠ℓ} reconstruction_ℓ′.

    Other lines are subtracted in order of ``frequencies`` when given, so the result does not
    depend on how the lines are numbered.
    """
    others = [line for line in range(line_count) if line != exclude_line]
    if frequencies is not None:
        others.sort(key=lambda line: frequencies[line])
    values = np.array(signal.values, dtype=float, copy=True)
    for line in others:
        reconstruction = reconstructions.get(line)
        if reconstruction is None:
            raise MissingEstimateError(line)
        values = values - reconstruction
    return signal.with_values(values)


def interference_negligible(kernel: Kernel, halfwidth: float, pth_derivative_amplitude: float,
                            residual_amplitude: float, separation: float, guard_bandwidth: float,
                            sample_count: int, margin: Optional[float] = None) -> bool:
    """True when the kernel's own bias dominates the leakage of a residual neighbouring line.

    Compares |C_{q,p}·∂_t^p A·h^p| against margin·|Ã·U((|Δω| − ω_b)/N)|.
    """
    margin = settings.INTERFERENCE_MARGIN if margin is None else margin
    if margin <= 1:
        raise ValueError("margin must exceed 1")
    if residual_amplitude == 0:
        return True
    bias = abs(kernel.c_qp * pth_derivative_amplitude * halfwidth ** kernel.order.p)
    leak_frequency = (abs(separation) - guard_bandwidth) / sample_count
    leakage = abs(residual_amplitude * kernel_spectrum(kernel, leak_frequency)[0])
    return bias > margin * leakage


def interference_loss(kernel: Kernel, halfwidth: float, residual_amplitude: float, separation: float,
                      guard_bandwidth: float, sample_count: int) -> float:
    """Squared leakage |Ã·U|²/h^{2q}, an additive correction to the predicted loss."""
    leak_frequency = (abs(separation) - guard_bandwidth) / sample_count
    leakage = abs(residual_amplitude * kernel_spectrum(kernel, leak_frequency)[0])
    return leakage ** 2 / halfwidth ** (2 * kernel.order.q)


def leakage_envelope(kernel: Kernel, leak_frequency: float, points: int = 2048) -> float:
    """max |U(ω)| over [leak_frequency, π] rad/sample: the worst leakage of any line beyond the guard."""
    if not 0 <= leak_frequency <= np.pi:
        raise ValueError(f"leak_frequency must lie in [0, π], got {leak_frequency}")
    return float(np.max(np.abs(kernel_spectrum(kernel, np.linspace(leak_frequency, np.pi, points)))))


def _interior(estimate: IFEstimate) -> np.ndarray:
    mask = ~estimate.edge_flags
    return mask if np.any(mask) else np.ones_like(mask)


def _amplitude_derivative(estimate: IFEstimate, p: int) -> float:
    derivative = estimate.amplitude
    for _ in range(p):
        derivative = np.gradient(derivative, estimate.times)
    return float(np.median(np.abs(derivative[_interior(estimate)])))


def _line_kernel(estimate: IFEstimate, shape: KernelShape, sample_rate: float) -> Kernel:
    nh = float(np.median(estimate.halfwidth_used)) * sample_rate
    reach = int(np.floor(nh + 1e-9))
    return design_window_kernel(DERIVATIVE_ORDER, shape, nh, reach, reach, sample_rate)


def _check_interference(signal: SampledSignal, tones: ToneSet, estimates: List[IFEstimate],
                        changes: Dict[int, float], shape: KernelShape, margin: float) -> bool:
    """True when every ordered pair of lines passes the interference test."""
    frequencies = tones.center_frequencies
    n = signal.sample_count
    for line, estimate in enumerate(estimates):
        kernel = _line_kernel(estimate, shape, signal.rate)
        halfwidth = float(np.median(estimate.halfwidth_used))
        curvature = _amplitude_derivative(estimate, DERIVATIVE_ORDER.p)
        for other in range(len(estimates)):
            if other == line:
                continue
            if not interference_negligible(kernel, halfwidth, curvature, changes[other],
                                           frequencies[line] - frequencies[other], tones.guard_bandwidth, n, margin):
                logger.info("interference_not_negligible", line=line, other=other,
                            residual_amplitude=changes[other])
                return False
    return True


def estimate_multitone(signal: SampledSignal, tones: ToneSet, config: IFConfig, noise,
                       max_outer_iterations: int = 3, tolerance: float = 1e-6,
                       margin: Optional[float] = None) -> MultitoneResult:
    """Estimate every line of ``tones`` by alternating per-line estimation and subtraction."""
    validate_tone_set(tones)
    if max_outer_iterations < 1:
        raise ValueError("max_outer_iterations must be at least 1")
    margin = settings.INTERFERENCE_MARGIN if margin is None else margin
    frequencies = list(tones.center_frequencies)
    line_count = len(frequencies)
    zero = np.zeros(signal.sample_count)
    reconstructions: Dict[int, np.ndarray] = {line: zero for line in range(line_count)}
    centers = list(frequencies)

    if line_count == 1:
        estimate = estimate_if(signal, config.model_copy(update={"initial_center_frequency": frequencies[0]}), noise)
        return MultitoneResult(estimates=[estimate], reconstructions={0: reconstruct_line(estimate)},
                               converged=estimate.converged, iterations=1, taper_engaged=False)

    estimates: List[IFEstimate] = []
    shape = config.kernel_shape
    taper_engaged = False
    converged = False
    history: List[float] = []
    iteration = 0

    for iteration in range(1, max_outer_iterations + 1):
        # before anything is subtracted, smooth the analytic data directly: phase units of a
        # record holding several comparable lines are not informative
        source = PhaseSource.ANALYTIC if iteration == 1 else config.phase_source
        updated: List[IFEstimate] = []
        with stage_timer("multitone_pass"):
            for line in range(line_count):
                data = corrected_dataset(signal, reconstructions, line, line_count, frequencies)
                line_config = config.model_copy(update={
                    "initial_center_frequency": centers[line],
                    "phase_source": source,
                    "kernel_shape": shape,
                })
                updated.append(estimate_if(data, line_config, noise))

        new_reconstructions = {line: reconstruct_line(est) for line, est in enumerate(updated)}
        changes = {
            line: float(np.sqrt(2) * np.sqrt(np.mean((new_reconstructions[line] - reconstructions[line]) ** 2)))
            for line in range(line_count)
        }
        if estimates:
            change = max(
                float(np.max(np.abs(new.instantaneous_frequency - old.instantaneous_frequency)[_interior(new)]))
                for new, old in zip(updated, estimates)
            )
            history.append(change)
            logger.info("multitone_iteration", iteration=iteration, max_change=change, taper=taper_engaged)
            if change < tolerance:
                estimates, reconstructions = updated, new_reconstructions
                converged = True
                break

        if not taper_engaged:
            if not _check_interference(signal, tones, updated, changes, shape, margin):
                taper_engaged = True
                shape = KernelShape.TAPER
                logger.info("taper_kernels_engaged", iteration=iteration)

        estimates, reconstructions = updated, new_reconstructions
        centers = [est.center_frequency for est in estimates]

    if not converged:
        logger.warning("multitone_not_converged", iterations=iteration)

    estimates = [_with_interference(est, line, estimates, tones, changes, signal, shape)
                 for line, est in enumerate(estimates)]
    return MultitoneResult(
        estimates=estimates,
        reconstructions=reconstructions,
        converged=converged,
        iterations=iteration,
        taper_engaged=taper_engaged,
        max_change_history=history,
    )


def _with_interference(estimate: IFEstimate, line: int, estimates: List[IFEstimate], tones: ToneSet,
                       changes: Dict[int, float], signal: SampledSignal, shape: KernelShape) -> IFEstimate:
    """Add the residual-line leakage, in IF units, to an estimate's predicted loss."""
    kernel = _line_kernel(estimate, shape, signal.rate)
    halfwidth = float(np.median(estimate.halfwidth_used))
    amplitude = max(float(np.median(np.abs(estimate.amplitude))), np.finfo(float).tiny)
    extra = sum(
        interference_loss(kernel, halfwidth, changes[other],
                          tones.center_frequencies[line] - tones.center_frequencies[other],
                          tones.guard_bandwidth, signal.sample_count)
        for other in range(len(estimates)) if other != line
    )
    interference = np.full(signal.sample_count, extra / amplitude ** 2)
    return dataclasses.replace(estimate, predicted_loss=estimate.predicted_loss + interference,
                               interference=interference)
