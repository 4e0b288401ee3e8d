"""Sampled signals, analytic series, phase observations and synthetic tone models"""

from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ifkernel.core.errors import InsufficientDataError


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Uniformly sampled measurements y_j at normalized times t_j."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if times.size < 2:
            raise InsufficientDataError("a signal needs at least 2 samples")
        steps = np.diff(times)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-6, atol=0.0):
            raise ValueError("times must be strictly increasing and uniform")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def on_unit_grid(cls, values) -> "SampledSignal":
        """Place N values at t_j = j/N, j = 0..N−1."""
        values = np.asarray(values)
        return cls(times=np.arange(values.size) / values.size, values=values)

    @property
    def sample_count(self) -> int:
        return int(self.times.size)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def rate(self) -> float:
        """Samples per unit normalized time (the N of the smoothing formulas)."""
        return 1.0 / self.step

    def with_values(self, values) -> "SampledSignal":
        return SampledSignal(times=self.times, values=np.asarray(values))

    def reversed(self) -> "SampledSignal":
        return SampledSignal(times=self.times, values=self.values[::-1].copy())


@dataclass(frozen=True, eq=False)
class AnalyticSeries:
    """Demodulated analytic samples z̃_j = z_j·e^{−i(ω_o t_j + φ_o)}."""

    samples: np.ndarray
    times: np.ndarray
    center_frequency: float
    phase_offset: float

    def __post_init__(self):
        if self.samples.shape != self.times.shape:
            raise ValueError("samples and times must have equal length")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("analytic samples must be finite")

    @property
    def source_length(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True, eq=False)
class PhaseObservations:
    """Unit-modulus phase observations u_j with phase noise variance σ_φ²."""

    units: np.ndarray
    phase_noise_variance: float
    amplitude: Optional[float] = None


class ToneSpec(BaseModel):
    """Closed-form A(t)·cos(φ(t)) with frequencies in rad per unit normalized time.

    amplitude: constant A₀, linear A₀ + a₁t, or sinusoidal A₀(1 + d·sin(r_a t)).
    phase: tone ω_o t + φ_o, chirp adds βt²/2, fm adds m·sin(r t).
    """

    model_config = ConfigDict(frozen=True)

    amplitude_kind: Literal["constant", "linear", "sinusoidal"] = "constant"
    amplitude: float = Field(default=1.0, gt=0)
    amplitude_slope: float = 0.0
    modulation_depth: float = Field(default=0.0, ge=0, lt=1)
    modulation_rate: float = 0.0

    phase_kind: Literal["tone", "chirp", "fm"] = "tone"
    center_frequency: float = Field(..., description="ω_o in rad per unit time")
    phase_offset: float = 0.0
    chirp_rate: float = 0.0
    fm_index: float = 0.0
    fm_rate: float = 0.0

    def amplitude_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.amplitude_kind == "linear":
            return self.amplitude + self.amplitude_slope * t
        if self.amplitude_kind == "sinusoidal":
            return self.amplitude * (1 + self.modulation_depth * np.sin(self.modulation_rate * t))
        return np.full_like(t, self.amplitude)

    def phase_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        phase = self.center_frequency * t + self.phase_offset
        if self.phase_kind == "chirp":
            phase = phase + 0.5 * self.chirp_rate * t ** 2
        elif self.phase_kind == "fm":
            phase = phase + self.fm_index * np.sin(self.fm_rate * t)
        return phase

    def phase_derivatives(self, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(φ′, φ″, φ‴) at t."""
        t = np.asarray(t, dtype=float)
        zero = np.zeros_like(t)
        if self.phase_kind == "chirp":
            return self.center_frequency + self.chirp_rate * t, zero + self.chirp_rate, zero
        if self.phase_kind == "fm":
            m, r = self.fm_index, self.fm_rate
            return (
                self.center_frequency + m * r * np.cos(r * t),
                -m * r ** 2 * np.sin(r * t),
                -m * r ** 3 * np.cos(r * t),
            )
        return zero + self.center_frequency, zero, zero

    def frequency_at(self, t) -> np.ndarray:
        return self.phase_derivatives(t)[0]

    def demodulated_third_derivative(self, t, center_frequency: Optional[float] = None) -> np.ndarray:
        """∂_t³e^{iφ̃} = e^{iφ̃}(iφ̃‴ − 3φ̃′φ̃″ − iφ̃′³) with φ̃ = φ − ω_c t − φ_o."""
        t = np.asarray(t, dtype=float)
        centre = self.center_frequency if center_frequency is None else center_frequency
        d1, d2, d3 = self.phase_derivatives(t)
        d1 = d1 - centre
        residual = self.phase_at(t) - centre * t - self.phase_offset
        return np.exp(1j * residual) * (1j * d3 - 3 * d1 * d2 - 1j * d1 ** 3)

    def signal_at(self, t) -> np.ndarray:
        return self.amplitude_at(t) * np.cos(self.phase_at(t))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Noise-free record and per-line amplitude, phase and frequency, shape (lines, N)."""

    times: np.ndarray
    clean: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    frequency: np.ndarray

    def to_dict(self) -> dict:
        return {
            "t": self.times,
            "clean": self.clean,
            "amplitude": self.amplitude,
            "phase": self.phase,
            "frequency": self.frequency,
        }
