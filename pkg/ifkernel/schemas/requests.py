"""Validated request models for the command-line workflows and benchmark scenarios.

Times are normalized to [0, 1]; frequencies are in rad per unit normalized time unless a
field name says Hz.
"""

import math
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ifkernel.schemas.estimate import PhaseSource, ScaleAnsatz
from ifkernel.schemas.kernel import KernelOrder, KernelShape, SmootherShape
from ifkernel.schemas.noise import CovarianceModel, White
from ifkernel.schemas.signal import ToneSpec


class RunConfig(BaseModel):
    """Options shared by every subcommand."""

    model_config = ConfigDict(extra="forbid")

    output: Path
    seed: Optional[int] = Field(default=None, ge=0)
    output_format: Literal["csv", "json"] = "csv"


class DesignKernelRequest(RunConfig):
    method: Literal["minimal_variance", "minimal_loss", "optimal", "legendre", "taper", "boundary"] = "optimal"
    q: int = Field(default=0, ge=0)
    p: int = Field(default=2, ge=1)
    grid_count: int = Field(default=201, ge=2)
    halfwidth: float = Field(default=1.0, gt=0)
    curvature: float = Field(default=0.0, ge=0, description="|∂_t^p g| for the minimal-loss design")
    noise: CovarianceModel = White(sigma2=1.0)
    estimation_point: float = 0.0
    sample_count: Optional[int] = Field(default=None, ge=2, description="record length for boundary designs")
    shape: SmootherShape = KernelShape.OPTIMAL
    output_format: Literal["csv", "json"] = "json"

    @property
    def order(self) -> KernelOrder:
        return KernelOrder.of(self.q, self.p)

    @model_validator(mode="after")
    def _check(self) -> "DesignKernelRequest":
        if self.p <= self.q:
            raise ValueError(f"order requires q < p, got ({self.q},{self.p})")
        if self.method == "boundary" and self.sample_count is None:
            raise ValueError("boundary designs need sample_count")
        return self


class GenerateRequest(RunConfig):
    tones: List[ToneSpec] = Field(..., min_length=1)
    sample_count: int = Field(..., ge=16)
    noise: CovarianceModel = White(sigma2=0.0)
    seed: int = Field(..., ge=0)


class SmoothRequest(RunConfig):
    input: Path
    q: int = Field(default=0, ge=0)
    p: int = Field(default=2, ge=1)
    halfwidth: Optional[float] = Field(default=None, gt=0, le=1)
    auto: bool = False
    shape: SmootherShape = KernelShape.OPTIMAL
    noise_variance: Optional[float] = Field(default=None, ge=0)
    ansatz: Optional[ScaleAnsatz] = None
    curvature_floor: Optional[float] = Field(default=None, ge=0)

    @property
    def order(self) -> KernelOrder:
        return KernelOrder.of(self.q, self.p)

    @model_validator(mode="after")
    def _check(self) -> "SmoothRequest":
        if self.p <= self.q:
            raise ValueError(f"order requires q < p, got ({self.q},{self.p})")
        if not self.auto and self.halfwidth is None:
            raise ValueError("either halfwidth or auto is required")
        if self.auto and (self.q not in (0, 1) or self.p != self.q + 2):
            raise ValueError("auto halfwidths support orders (0,2) and (1,3)")
        return self


class EstimateIFRequest(RunConfig):
    input: Path
    omega0: Optional[float] = None
    frequency_hz: Optional[float] = Field(default=None, gt=0)
    sample_rate_hz: Optional[float] = Field(default=None, gt=0)
    phi0: float = 0.0
    halfwidth: Optional[float] = Field(default=None, gt=0, le=1)
    auto: bool = False
    third_derivative: Optional[float] = Field(default=None, ge=0)
    iterations: int = Field(default=5, ge=1)
    tolerance: float = Field(default=1e-6, gt=0)
    phase_source: PhaseSource = PhaseSource.UNITS
    shape: SmootherShape = KernelShape.OPTIMAL
    local_recentering: bool = False
    noise_variance: Optional[float] = Field(default=None, ge=0)
    ansatz: Optional[ScaleAnsatz] = None

    @model_validator(mode="after")
    def _check(self) -> "EstimateIFRequest":
        if (self.omega0 is None) == (self.frequency_hz is None):
            raise ValueError("give exactly one of omega0 and frequency_hz")
        if self.frequency_hz is not None and self.sample_rate_hz is None:
            raise ValueError("frequency_hz needs sample_rate_hz")
        if not self.auto and self.halfwidth is None and self.third_derivative is None:
            raise ValueError("give halfwidth, third_derivative or auto")
        return self

    def center_frequency(self, sample_count: int) -> float:
        """ω_o in rad per unit normalized time; a record of N samples at f_s spans N/f_s seconds."""
        if self.omega0 is not None:
            return self.omega0
        return 2 * math.pi * self.frequency_hz * sample_count / self.sample_rate_hz


class MultitoneRequest(RunConfig):
    input: Path
    freqs: List[float] = Field(..., min_length=1)
    guard: float = Field(..., gt=0)
    outer_iterations: int = Field(default=3, ge=1)
    tolerance: float = Field(default=1e-6, gt=0)
    halfwidth: Optional[float] = Field(default=None, gt=0, le=1)
    auto: bool = False
    iterations: int = Field(default=5, ge=1)
    noise_variance: Optional[float] = Field(default=None, ge=0)
    margin: Optional[float] = Field(default=None, gt=1)

    @model_validator(mode="after")
    def _check(self) -> "MultitoneRequest":
        if not self.auto and self.halfwidth is None:
            raise ValueError("either halfwidth or auto is required")
        return self


def _default_fm_tone() -> ToneSpec:
    return ToneSpec(center_frequency=0.2 * math.pi * 1024, phase_kind="fm", fm_index=4.0, fm_rate=2 * math.pi)


class BenchmarkScenario(BaseModel):
    """One sweep over record lengths and noise levels."""

    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., min_length=1, pattern=r"^[A-Za-z0-9_\-]+$")
    kind: Literal["smoothing", "if_halfwidth", "if_error", "polynomial", "multitone", "adaptive"]
    sample_counts: List[int] = Field(..., min_length=1)
    snr_db: List[Optional[float]] = Field(default_factory=lambda: [20.0], min_length=1)
    replications: int = Field(default=20, ge=1)
    seed: int = Field(..., ge=0)
    q: int = Field(default=0, ge=0)
    p: int = Field(default=2, ge=1)
    halfwidths: Optional[List[float]] = None
    tone: Optional[ToneSpec] = None
    polynomial: List[float] = Field(default_factory=lambda: [0.5, -1.0], description="coefficients, lowest degree first")
    shape: SmootherShape = KernelShape.OPTIMAL
    separation: float = Field(default=0.3 * math.pi, gt=0, lt=math.pi,
                              description="multitone line spacing in rad/sample, centred on π/2")
    outer_iterations: int = Field(default=2, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "BenchmarkScenario":
        if any(n < 16 for n in self.sample_counts):
            raise ValueError("sample_counts must all be at least 16")
        if self.p <= self.q:
            raise ValueError(f"order requires q < p, got ({self.q},{self.p})")
        if self.kind == "adaptive" and (self.q not in (0, 1) or self.p != self.q + 2):
            raise ValueError("adaptive scenarios support orders (0,2) and (1,3)")
        if self.halfwidths is not None and any(not 0 < h <= 1 for h in self.halfwidths):
            raise ValueError("halfwidths must lie in (0, 1]")
        return self

    @property
    def order(self) -> KernelOrder:
        return KernelOrder.of(self.q, self.p)

    @property
    def tone_spec(self) -> ToneSpec:
        return self.tone or _default_fm_tone()


class BenchmarkRequest(RunConfig):
    scenario: BenchmarkScenario
    jobs: Optional[int] = Field(default=None, ge=1)
