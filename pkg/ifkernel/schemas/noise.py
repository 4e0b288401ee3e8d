"""Noise covariance models: white, stationary lag, spectral density, Hilbert phase error"""

from typing import Annotated, Callable, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.integrate import trapezoid


def hilbert_xi(lag):
    """ξ(k) = 2/(πk) for odd k, 0 otherwise (odd function of the lag)."""
    lag = np.asarray(lag)
    odd = (lag % 2) != 0
    safe = np.where(odd, lag, 1)
    return np.where(odd, 2.0 / (np.pi * safe), 0.0)


class White(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["white"] = "white"
    sigma2: float = Field(..., ge=0, description="Noise variance σ²")

    def variance(self, center_frequency: float = 0.0) -> float:
        return self.sigma2

    def lag_covariance(self, lags: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(lags) == 0, self.sigma2, 0.0)


class StationaryLag(BaseModel):
    """Cov[e_j, e_k] = σ²·R(j − k) with R(0) = 1; R given for lags 0..L, zero beyond."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["stationary_lag"] = "stationary_lag"
    sigma2: float = Field(..., ge=0)
    correlation: List[float] = Field(..., min_length=1)

    @field_validator("correlation")
    @classmethod
    def _unit_lag_zero(cls, value: List[float]) -> List[float]:
        if abs(value[0] - 1.0) > 1e-12:
            raise ValueError("correlation[0] must equal 1")
        return value

    def variance(self, center_frequency: float = 0.0) -> float:
        return self.sigma2

    def lag_covariance(self, lags: np.ndarray) -> np.ndarray:
        lags = np.abs(np.asarray(lags, dtype=int))
        table = np.asarray(self.correlation, dtype=float)
        inside = lags < table.size
        return self.sigma2 * np.where(inside, table[np.minimum(lags, table.size - 1)], 0.0)


class Spectral(BaseModel):
    """Spectral density S(ω) on [0, π] rad/sample (even in ω), tabulated.

    White noise of variance σ² corresponds to S ≡ σ².
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["spectral"] = "spectral"
    frequencies: List[float] = Field(..., min_length=2)
    values: List[float] = Field(..., min_length=2)

    @model_validator(mode="after")
    def _check_table(self) -> "Spectral":
        if len(self.frequencies) != len(self.values):
            raise ValueError("frequencies and values must have equal length")
        if any(v < 0 for v in self.values):
            raise ValueError("spectral density must be nonnegative")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        return self

    @classmethod
    def from_function(cls, density: Callable[[np.ndarray], np.ndarray], points: int = 513) -> "Spectral":
        grid = np.linspace(0.0, np.pi, points)
        return cls(frequencies=grid.tolist(), values=np.asarray(density(grid), dtype=float).tolist())

    def density(self, omega) -> np.ndarray:
        omega = np.abs(np.angle(np.exp(1j * np.asarray(omega, dtype=float))))
        return np.interp(omega, self.frequencies, self.values)

    def variance(self, center_frequency: float = 0.0) -> float:
        """S(ω_o), the localized variance; ``center_frequency`` in rad/sample."""
        return float(self.density(center_frequency))

    def lag_covariance(self, lags: np.ndarray, points: int = 4096) -> np.ndarray:
        """R(k) = (1/2π)∫S(ω)e^{iωk}dω by trapezoid quadrature."""
        lags = np.abs(np.asarray(lags, dtype=float))
        unique, inverse = np.unique(lags, return_inverse=True)
        omega = np.linspace(-np.pi, np.pi, points)
        s = self.density(omega)
        table = trapezoid(s * np.cos(np.multiply.outer(unique, omega)), omega, axis=-1) / (2 * np.pi)
        return table[inverse].reshape(lags.shape)


class HilbertPhase(BaseModel):
    """Phase-unit error covariance induced by the Hilbert transform."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["hilbert_phase"] = "hilbert_phase"
    amplitude: float = Field(..., gt=0)
    sigma2: float = Field(..., ge=0)

    @property
    def phase_variance(self) -> float:
        return self.sigma2 / (self.amplitude ** 2 + self.sigma2)

    def variance(self, center_frequency: float = 0.0) -> float:
        return self.phase_variance

    def lag_covariance(self, lags: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(lags) == 0, self.phase_variance, 0.0)


CovarianceModel = Annotated[Union[White, StationaryLag, Spectral, HilbertPhase], Field(discriminator="kind")]


def covariance_matrix(noise, lags: np.ndarray, phases: Optional[np.ndarray] = None) -> np.ndarray:
    """Covariance matrix of the noise on samples at integer ``lags``.

    For the Hilbert phase model the phases φ(t_j) enter through the lag-coupled Hilbert term and the matrix is
    Hermitian; other models give a real symmetric Toeplitz matrix.
    """
    lags = np.asarray(np.rint(lags), dtype=int)
    diff = np.subtract.outer(lags, lags)
    if isinstance(noise, HilbertPhase):
        if phases is None:
            return noise.phase_variance * np.eye(lags.size)
        dphi = np.subtract.outer(phases, phases)
        return noise.phase_variance * (np.eye(lags.size) - hilbert_xi(diff) * np.exp(1j * dphi) * np.sin(dphi))
    return noise.lag_covariance(diff)
