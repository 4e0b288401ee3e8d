"""Instantaneous frequency estimation from smoothed phase units.

The (0,2) estimate ê of e^{iφ̃} and the (1,3) estimate ∂̂ of ∂_t e^{iφ̃} combine as
φ̂′ = ω_o + Im[∂̂·conj(ê)]/|ê|², and the centre frequency is iterated on the mean offset.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import structlog
from scipy.integrate import cumulative_trapezoid

from ifkernel.core.config import settings
from ifkernel.core.metrics import stage_timer
from ifkernel.schemas.estimate import HalfwidthMode, HalfwidthSelection, IFConfig, IFEstimate, PhaseSource
from ifkernel.schemas.kernel import KernelOrder
from ifkernel.schemas.noise import HilbertPhase, White
from ifkernel.schemas.signal import AnalyticSeries, SampledSignal
from ifkernel.services.adaptive import multistage_estimate
from ifkernel.services.analytic_signal import (
    analytic,
    demodulate,
    hilbert_cross_covariance,
    phase_noise_variance,
    phase_units,
)
from ifkernel.services.kernel_design import kernel_constants
from ifkernel.services.smoothing import (
    KernelFamily,
    estimate_noise_variance,
    minimal_loss_value,
    noise_level,
    optimal_halfwidth,
    smooth_series,
    smooth_varying,
)

logger = structlog.get_logger(__name__)

PHASOR_ORDER = KernelOrder.of(0, 2)
DERIVATIVE_ORDER = KernelOrder.of(1, 3)


def if_optimal_halfwidth(phase_noise_variance: float, sample_count: int, third_derivative: float,
                         m2: float, c13: float) -> HalfwidthSelection:
    """h = (¾·σ_φ²m₂/(C_{1,3}²N|∂_t³e^{iφ̃}|²))^{1/7}, clipped; zero derivative is flagged degenerate."""
    return optimal_halfwidth(DERIVATIVE_ORDER, White(sigma2=phase_noise_variance), third_derivative,
                             sample_count, m2, c13)


def if_predicted_loss(phase_noise_variance: float, sample_count: int, third_derivative: float,
                      m2: float, c13: float) -> float:
    """M_{1,3}·|C_{1,3}∂_t³e^{iφ̃}|^{6/7}·(σ_φ²m₂/N)^{4/7}."""
    return minimal_loss_value(DERIVATIVE_ORDER, White(sigma2=phase_noise_variance), third_derivative,
                              sample_count, m2, c13)


def analytic_phasor_variance(noise_variance: float, m2: float, sample_count: int, halfwidth: float,
                             q: int = 0) -> float:
    """2σ²m₂/(Nh^{2q+1}): real and imaginary parts both carry the analytic noise."""
    return 2 * noise_variance * m2 / (sample_count * halfwidth ** (2 * q + 1))


def estimate_analytic_noise_variance(signal: SampledSignal, center_frequency: float, phase_offset: float = 0.0) -> float:
    """Per-component noise variance σ² from first differences of the demodulated analytic signal.

    After demodulation by ω_s rad/sample, differences of analytic white noise have
    E|Δε̃|² = 4σ²(1 − ξ(1)·sin ω_s), and the slowly varying phasor contributes little.
    """
    series = demodulate(analytic(signal), signal.times, center_frequency, phase_offset)
    sample_frequency = center_frequency / signal.rate
    factor = 1.0 - hilbert_cross_covariance(1) * np.sin(sample_frequency)
    return estimate_noise_variance(series.samples) / (2 * factor)


def _analytic_noise_variance(noise, center_frequency: float, sample_count: int) -> float:
    if isinstance(noise, HilbertPhase):
        return noise.sigma2
    return noise_level(noise, center_frequency, sample_count)


def _effective_phase_variance(noise, amplitude: float, center_frequency: float, sample_count: int) -> float:
    if isinstance(noise, HilbertPhase):
        return noise.phase_variance
    if amplitude <= 0:
        return 1.0
    return phase_noise_variance(amplitude, _analytic_noise_variance(noise, center_frequency, sample_count))


def integrated_phase(times: np.ndarray, frequency: np.ndarray, carrier_phase: np.ndarray,
                     phasor: np.ndarray) -> np.ndarray:
    """Phase from the trapezoid integral of φ̂′, anchored at the record midpoint to the
    carrier phase plus the argument of the smoothed phasor."""
    middle = times.size // 2
    integral = cumulative_trapezoid(frequency, times, initial=0.0)
    anchor = carrier_phase[middle] + np.angle(phasor[middle])
    return anchor + integral - integral[middle]


@dataclass(frozen=True, eq=False)
class _PassResult:
    frequency: np.ndarray
    phasor: np.ndarray
    amplitude: np.ndarray
    halfwidths: np.ndarray
    bias_squared: np.ndarray
    variance: np.ndarray
    coherence: np.ndarray

    @property
    def predicted_loss(self) -> np.ndarray:
        return self.bias_squared + self.variance


def _edge_flags(sample_count: int, halfwidths: np.ndarray, rate: float) -> np.ndarray:
    reach = np.floor(halfwidths * rate + 1e-9)
    index = np.arange(sample_count)
    return (index < reach) | (sample_count - 1 - index < reach)


def _estimate_pass(signal: SampledSignal, series: AnalyticSeries, carrier_rate: np.ndarray,
                   config: IFConfig, noise) -> _PassResult:
    """One smooth-and-combine pass over data demodulated at the rate ``carrier_rate``."""
    n = signal.sample_count
    mean_carrier = float(np.mean(carrier_rate))
    z_tilde = series.samples
    modulus = np.abs(z_tilde)
    typical_amplitude = float(np.median(modulus))
    sigma_phi2 = _effective_phase_variance(noise, typical_amplitude, mean_carrier, n)

    if config.phase_source == PhaseSource.UNITS:
        observations = phase_units(series, max(typical_amplitude, np.finfo(float).tiny),
                                   _analytic_noise_variance(noise, mean_carrier, n)).units
    else:
        observations = z_tilde
    data = signal.with_values(observations)

    m2, c13 = kernel_constants(DERIVATIVE_ORDER, config.kernel_shape)
    bias_curvature = None
    if config.halfwidth_mode == HalfwidthMode.ADAPTIVE:
        result = multistage_estimate(data, final_q=1, ansatz=config.ansatz, noise=White(sigma2=sigma_phi2),
                                     shape=config.kernel_shape)
        halfwidths = result.halfwidths
        numerator = result.estimate
        denominator = smooth_varying(data, PHASOR_ORDER, halfwidths, config.kernel_shape)
        if config.phase_source == PhaseSource.UNITS:
            amplitude = smooth_varying(signal.with_values(modulus), PHASOR_ORDER, halfwidths, config.kernel_shape)
        else:
            amplitude = np.abs(denominator)
        bias_curvature = result.curvature
    else:
        if config.halfwidth_mode == HalfwidthMode.OPTIMAL:
            halfwidth = if_optimal_halfwidth(sigma_phi2, n, config.third_derivative, m2, c13).halfwidth
            bias_curvature = np.full(n, config.third_derivative ** 2)
        else:
            halfwidth = config.halfwidth
            if config.third_derivative is not None:
                bias_curvature = np.full(n, config.third_derivative ** 2)
        halfwidths = np.full(n, halfwidth)
        phasor_family = KernelFamily(order=PHASOR_ORDER, halfwidth=halfwidth, shape=config.kernel_shape)
        derivative_family = KernelFamily(order=DERIVATIVE_ORDER, halfwidth=halfwidth, shape=config.kernel_shape)
        denominator = smooth_series(data, phasor_family)
        numerator = smooth_series(data, derivative_family)
        if config.phase_source == PhaseSource.UNITS:
            amplitude = smooth_series(signal.with_values(modulus), phasor_family)
        else:
            amplitude = np.abs(denominator)

    power = np.abs(denominator) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = np.where(power > 0, np.imag(numerator * np.conj(denominator)) / power, 0.0)

    variance = sigma_phi2 * m2 / (n * halfwidths ** 3)
    bias_squared = np.zeros(n) if bias_curvature is None else c13 ** 2 * bias_curvature * halfwidths ** 4
    coherence = np.abs(denominator)
    if config.phase_source == PhaseSource.ANALYTIC:
        coherence = coherence / max(typical_amplitude, np.finfo(float).tiny)

    return _PassResult(
        frequency=carrier_rate + offset,
        phasor=denominator,
        amplitude=np.real(amplitude),
        halfwidths=halfwidths,
        bias_squared=bias_squared,
        variance=variance,
        coherence=coherence,
    )


def estimate_if(signal: SampledSignal, config: IFConfig, noise) -> IFEstimate:
    """Estimate φ′(t) on the sample grid with centre-frequency iteration."""
    n = signal.sample_count
    times = signal.times
    threshold = config.low_coherence_threshold or settings.LOW_COHERENCE_THRESHOLD
    with stage_timer("analytic"):
        z = analytic(signal)

    omega = config.initial_center_frequency
    history = []
    converged = False
    result: Optional[_PassResult] = None
    used_omega = omega

    with stage_timer("center_iteration"):
        for iteration in range(config.max_center_iterations):
            used_omega = omega
            history.append(omega)
            series = demodulate(z, times, omega, config.phase_offset)
            result = _estimate_pass(signal, series, np.full(n, omega), config, noise)
            flagged = _edge_flags(n, result.halfwidths, signal.rate) | (result.coherence < threshold)
            usable = ~flagged if np.any(~flagged) else np.ones(n, dtype=bool)
            shift = float(np.mean(result.frequency[usable] - omega))
            logger.debug("center_update", iteration=iteration, center_frequency=omega, shift=shift)
            if abs(shift) < config.center_tolerance:
                converged = True
                break
            omega = omega + shift

    if not converged:
        logger.warning("center_iteration_not_converged", iterations=config.max_center_iterations,
                       last_center_frequency=used_omega)

    if config.local_recentering:
        # one pass demodulated by the integrated first-pass frequency track
        track = config.phase_offset + used_omega * times + cumulative_trapezoid(
            result.frequency - used_omega, times, initial=0.0
        )
        series = AnalyticSeries(samples=z * np.exp(-1j * track), times=times, center_frequency=used_omega,
                                phase_offset=config.phase_offset)
        result = _estimate_pass(signal, series, result.frequency, config, noise)
    else:
        track = config.phase_offset + used_omega * times

    phase = integrated_phase(times, result.frequency, track, result.phasor)
    edges = _edge_flags(n, result.halfwidths, signal.rate)
    low_coherence = result.coherence < threshold
    if np.any(low_coherence):
        logger.warning("low_coherence", points=int(low_coherence.sum()), threshold=threshold)

    return IFEstimate(
        times=times,
        instantaneous_frequency=result.frequency,
        amplitude=result.amplitude,
        halfwidth_used=result.halfwidths,
        predicted_loss=result.predicted_loss,
        edge_flags=edges,
        low_coherence_flags=low_coherence,
        phasor=result.phasor,
        phase=phase,
        center_frequency=used_omega,
        phase_offset=config.phase_offset,
        converged=converged,
        center_history=history,
        bias_squared=result.bias_squared,
        variance=result.variance,
        interference=np.zeros(n),
    )
