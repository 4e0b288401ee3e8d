"""Synthetic signals with ground truth, colored noise synthesis and finite-difference oracles"""

from typing import List, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy import ndimage

from ifkernel.core.errors import ConfigError, InsufficientDataError
from ifkernel.schemas.noise import HilbertPhase, Spectral, StationaryLag, White
from ifkernel.schemas.signal import GroundTruth, SampledSignal, ToneSpec

logger = structlog.get_logger(__name__)

MIN_SAMPLES = 16

# central difference stencils, O(step²)
STENCILS = {
    0: np.array([1.0]),
    1: np.array([-0.5, 0.0, 0.5]),
    2: np.array([1.0, -2.0, 1.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
    4: np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
}


def _circulant_noise(first_row: np.ndarray, sample_count: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary Gaussian samples from the eigenvalues of a circulant embedding."""
    size = first_row.size
    eigenvalues = np.real(np.fft.fft(first_row))
    if eigenvalues.min() < -1e-10 * max(eigenvalues.max(), 1e-300):
        logger.warning("embedding_not_psd", min_eigenvalue=float(eigenvalues.min()))
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    white = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return np.real(np.fft.fft(np.sqrt(eigenvalues / size) * white))[:sample_count]


def colored_noise(noise, sample_count: int, rng: np.random.Generator) -> np.ndarray:
    """One noise record of the given covariance model on ``sample_count`` samples."""
    if isinstance(noise, White):
        return np.sqrt(noise.sigma2) * rng.standard_normal(sample_count)
    if isinstance(noise, HilbertPhase):
        raise ConfigError("the Hilbert phase model describes phase errors, not additive noise", field="noise")

    size = 2 * sample_count
    if isinstance(noise, StationaryLag):
        half = noise.lag_covariance(np.arange(size // 2 + 1))
        first_row = np.concatenate([half, half[-2:0:-1]])
        return _circulant_noise(first_row, sample_count, rng)
    if isinstance(noise, Spectral):
        omega = 2 * np.pi * np.arange(size) / size
        spectrum = noise.density(omega)
        white = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        return np.real(np.fft.fft(np.sqrt(spectrum / size) * white))[:sample_count]
    raise ConfigError(f"unsupported noise model {type(noise).__name__}", field="noise")


def add_noise(clean: np.ndarray, noise, seed: int) -> SampledSignal:
    clean = np.asarray(clean, dtype=float)
    rng = np.random.default_rng(seed)
    return SampledSignal.on_unit_grid(clean + colored_noise(noise, clean.size, rng))


def generate(specs: Union[ToneSpec, Sequence[ToneSpec]], sample_count: int, noise, seed: int) -> Tuple[SampledSignal, GroundTruth]:
    """Sum of tones on t_j = j/N plus one noise realization; deterministic in ``seed``."""
    if sample_count < MIN_SAMPLES:
        raise InsufficientDataError(f"generate needs at least {MIN_SAMPLES} samples, got {sample_count}")
    tones: List[ToneSpec] = [specs] if isinstance(specs, ToneSpec) else list(specs)
    if not tones:
        raise ConfigError("at least one tone is required", field="tones")

    times = np.arange(sample_count) / sample_count
    amplitude = np.vstack([tone.amplitude_at(times) for tone in tones])
    phase = np.vstack([tone.phase_at(times) for tone in tones])
    frequency = np.vstack([tone.frequency_at(times) for tone in tones])
    clean = np.sum(amplitude * np.cos(phase), axis=0)

    signal = add_noise(clean, noise, seed)
    logger.debug("signal_generated", tones=len(tones), sample_count=sample_count, seed=seed)
    return signal, GroundTruth(times=times, clean=clean, amplitude=amplitude, phase=phase, frequency=frequency)


def oracle_finite_difference_derivative(values: Sequence[float], q: int, step: float) -> np.ndarray:
    """Central difference of order q; samples within the stencil radius of an end are NaN."""
    if q not in STENCILS:
        raise ValueError(f"finite-difference oracle supports q in 0..4, got {q}")
    values = np.asarray(values)
    weights = STENCILS[q] / step ** q
    if np.iscomplexobj(values):
        out = ndimage.correlate1d(values.real, weights, mode="nearest") + 1j * ndimage.correlate1d(
            values.imag, weights, mode="nearest")
    else:
        out = ndimage.correlate1d(values.astype(float), weights, mode="nearest")
    radius = weights.size // 2
    if radius:
        out = out.astype(np.result_type(out.dtype, float))
        out[:radius] = np.nan
        out[-radius:] = np.nan
    return out
