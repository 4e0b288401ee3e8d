"""Estimation configs and results: losses, halfwidths, IF estimates, multistage and multitone"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ifkernel.schemas.kernel import KernelOrder, KernelShape, SmootherShape


@dataclass(frozen=True)
class LossReport:
    """Leading-order squared error split into bias², variance and interference."""

    bias_squared: float
    variance: float
    halfwidth: float
    order: KernelOrder
    interference: float = 0.0

    @property
    def total(self) -> float:
        return self.bias_squared + self.variance + self.interference


@dataclass(frozen=True)
class HalfwidthSelection:
    halfwidth: float
    unclipped: float
    clipped: bool = False
    degenerate: bool = False

    def __float__(self) -> float:
        return self.halfwidth


class HalfwidthMode(str, Enum):
    FIXED = "fixed"
    OPTIMAL = "optimal"
    ADAPTIVE = "adaptive"


class PhaseSource(str, Enum):
    UNITS = "units"
    ANALYTIC = "analytic"


class ScaleAnsatz(BaseModel):
    """Characteristic amplitude Ā and time scale τ: |∂_t^p g| ≈ Ā/τ^p."""

    model_config = ConfigDict(frozen=True)

    amplitude: float = Field(..., gt=0, allow_inf_nan=False)
    time_scale: float = Field(..., gt=0, allow_inf_nan=False)

    def curvature(self, p: int) -> float:
        return self.amplitude / self.time_scale ** p


class IFConfig(BaseModel):
    """Instantaneous-frequency pipeline settings; frequencies in rad per unit normalized time."""

    model_config = ConfigDict(frozen=True)

    initial_center_frequency: float
    phase_offset: float = 0.0
    max_center_iterations: int = Field(default=5, ge=1)
    center_tolerance: float = Field(default=1e-6, gt=0)
    halfwidth_mode: HalfwidthMode = HalfwidthMode.FIXED
    halfwidth: Optional[float] = Field(default=None, gt=0, le=1)
    third_derivative: Optional[float] = Field(default=None, ge=0, description="|∂_t³e^{iφ̃}| for optimal mode")
    ansatz: Optional[ScaleAnsatz] = None
    kernel_shape: SmootherShape = KernelShape.OPTIMAL
    phase_source: PhaseSource = PhaseSource.UNITS
    local_recentering: bool = False
    low_coherence_threshold: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_mode(self) -> "IFConfig":
        if self.halfwidth_mode == HalfwidthMode.FIXED and self.halfwidth is None:
            raise ValueError("fixed halfwidth mode requires halfwidth")
        if self.halfwidth_mode == HalfwidthMode.OPTIMAL and self.third_derivative is None:
            raise ValueError("optimal halfwidth mode requires third_derivative")
        return self


@dataclass(frozen=True, eq=False)
class IFEstimate:
    times: np.ndarray
    instantaneous_frequency: np.ndarray
    amplitude: np.ndarray
    halfwidth_used: np.ndarray
    predicted_loss: np.ndarray
    edge_flags: np.ndarray
    low_coherence_flags: np.ndarray
    phasor: np.ndarray
    center_frequency: float
    phase_offset: float
    converged: bool = True
    phase: Optional[np.ndarray] = None
    center_history: List[float] = field(default_factory=list)
    bias_squared: Optional[np.ndarray] = None
    variance: Optional[np.ndarray] = None
    interference: Optional[np.ndarray] = None

    def loss_report(self) -> LossReport:
        """Median loss terms over the points whose window is not truncated."""
        interior = ~self.edge_flags if np.any(~self.edge_flags) else np.ones_like(self.edge_flags)

        def term(values: Optional[np.ndarray]) -> float:
            return 0.0 if values is None else float(np.median(np.broadcast_to(values, self.times.shape)[interior]))

        return LossReport(
            bias_squared=term(self.bias_squared),
            variance=term(self.variance),
            halfwidth=float(np.median(self.halfwidth_used[interior])),
            order=KernelOrder.of(1, 3),
            interference=term(self.interference),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.times,
                "if_estimate": self.instantaneous_frequency,
                "amplitude": self.amplitude,
                "halfwidth": self.halfwidth_used,
                "predicted_loss": self.predicted_loss,
                "edge_flag": self.edge_flags.astype(int),
                "low_coherence_flag": self.low_coherence_flags.astype(int),
            }
        )


@dataclass(frozen=True, eq=False)
class MultistageResult:
    estimate: np.ndarray
    halfwidths: np.ndarray
    pilot: np.ndarray
    curvature: np.ndarray
    pilot_halfwidth: float
    smoother_halfwidth: float


class ToneSet(BaseModel):
    """Line frequencies ω_ℓ (rad per unit normalized time) with guard bandwidth ω_b."""

    model_config = ConfigDict(frozen=True)

    center_frequencies: List[float] = Field(..., min_length=1)
    guard_bandwidth: float = Field(..., gt=0)


@dataclass(frozen=True, eq=False)
class MultitoneResult:
    estimates: List[IFEstimate]
    reconstructions: Dict[int, np.ndarray]
    converged: bool
    iterations: int
    taper_engaged: bool
    max_change_history: List[float] = field(default_factory=list)

    @property
    def loss_reports(self) -> List[LossReport]:
        return [estimate.loss_report() for estimate in self.estimates]
