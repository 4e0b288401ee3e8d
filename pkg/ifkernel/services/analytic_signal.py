"""Analytic signal, demodulation, phase units and Hilbert-induced noise covariances"""

from typing import Optional, Sequence

import numpy as np
import structlog
from scipy import signal as sps

from ifkernel.core.errors import InsufficientDataError, ZeroModulusError
from ifkernel.schemas.noise import HilbertPhase, covariance_matrix, hilbert_xi
from ifkernel.schemas.signal import AnalyticSeries, PhaseObservations, SampledSignal

logger = structlog.get_logger(__name__)


def hilbert_transform(values: Sequence[float]) -> np.ndarray:
    """Discrete Hilbert transform by the one-sided spectrum construction.

    For even lengths the Nyquist coefficient keeps weight 1.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 4:
        raise InsufficientDataError("the Hilbert transform needs at least 4 samples")
    return np.imag(sps.hilbert(values))


def analytic(signal: SampledSignal) -> np.ndarray:
    """z = x + iH[x]; the real part is the input itself, not the round-tripped FFT."""
    x = np.asarray(signal.values, dtype=float)
    return x + 1j * hilbert_transform(x)


def demodulate(z: Sequence[complex], times: Sequence[float], center_frequency: float,
               phase_offset: float = 0.0) -> AnalyticSeries:
    """z̃_j = z_j·e^{−i(ω_o t_j + φ_o)} with ω_o in rad per unit time."""
    z = np.asarray(z, dtype=complex)
    times = np.asarray(times, dtype=float)
    carrier = np.exp(-1j * (center_frequency * times + phase_offset))
    return AnalyticSeries(samples=z * carrier, times=times, center_frequency=center_frequency,
                          phase_offset=phase_offset)


def remodulate(series: AnalyticSeries) -> np.ndarray:
    return series.samples * np.exp(1j * (series.center_frequency * series.times + series.phase_offset))


def phase_noise_variance(amplitude: float, noise_variance: float) -> float:
    """σ_φ² = σ̄²/(A² + σ̄²) for per-component analytic noise variance σ̄²."""
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    return HilbertPhase(amplitude=amplitude, sigma2=noise_variance).phase_variance


def phase_units(series: AnalyticSeries, amplitude: float, noise_variance: float) -> PhaseObservations:
    """u_j = z̃_j/|z̃_j| with the phase noise variance of the unit observations."""
    modulus = np.abs(series.samples)
    zeros = np.flatnonzero(modulus == 0)
    if zeros.size:
        raise ZeroModulusError(int(zeros[0]))
    return PhaseObservations(
        units=series.samples / modulus,
        phase_noise_variance=phase_noise_variance(amplitude, noise_variance),
        amplitude=amplitude,
    )


def hilbert_cross_covariance(lag: int) -> float:
    """ξ(lag): 2/(π·lag) for odd lags, zero for even lags."""
    return float(hilbert_xi(lag))


def analytic_noise_covariance(lags: Sequence[int], sigma2: float) -> np.ndarray:
    """Cov[ε_j, ε̄_k] = 2σ²(δ_jk + iξ(j−k)) for the analytic signal of white noise."""
    lags = np.asarray(lags, dtype=int)
    diff = np.subtract.outer(lags, lags)
    return 2 * sigma2 * ((diff == 0) + 1j * hilbert_xi(diff))


def phase_error_covariance(phases: Sequence[float], amplitude: float, sigma2: float,
                           lags: Optional[Sequence[int]] = None) -> np.ndarray:
    """Hermitian covariance of the phase-unit errors for carrier phases φ(t_j)."""
    phases = np.asarray(phases, dtype=float)
    lags = np.arange(phases.size) if lags is None else np.asarray(lags)
    return covariance_matrix(HilbertPhase(amplitude=amplitude, sigma2=sigma2), lags, phases)


def circular_variance(units: Sequence[complex], reference: Optional[complex] = None) -> float:
    """Mean of |u_j − ū|², with ū the sample mean unless a reference phasor is given."""
    units = np.asarray(units, dtype=complex)
    centre = units.mean() if reference is None else reference
    return float(np.mean(np.abs(units - centre) ** 2))
