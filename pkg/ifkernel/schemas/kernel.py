"""Kernel types: orders, shapes, discrete weight sequences and design problems"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, model_validator


class KernelShape(str, Enum):
    MINIMAL_VARIANCE = "minimal_variance"
    MINIMAL_LOSS = "minimal_loss"
    OPTIMAL = "optimal"
    TAPER = "taper"


# minimal-loss weights depend on the local curvature, so no kernel family is built from them
SMOOTHER_SHAPES = (KernelShape.MINIMAL_VARIANCE, KernelShape.OPTIMAL, KernelShape.TAPER)


def ensure_smoother_shape(shape: KernelShape) -> KernelShape:
    if shape not in SMOOTHER_SHAPES:
        raise ValueError(f"shape must be one of {[s.value for s in SMOOTHER_SHAPES]}, got {shape.value}")
    return shape


SmootherShape = Annotated[KernelShape, AfterValidator(ensure_smoother_shape)]


class KernelOrder(BaseModel):
    """Order (q, p): estimates the q-th derivative, first free moment is p."""

    model_config = ConfigDict(frozen=True)

    q: int = Field(..., ge=0, description="Derivative order estimated")
    p: int = Field(..., ge=1, description="First unconstrained moment")

    @model_validator(mode="after")
    def _check_order(self) -> "KernelOrder":
        if self.p <= self.q:
            raise ValueError(f"order requires q < p, got ({self.q},{self.p})")
        return self

    @classmethod
    def of(cls, q: int, p: int) -> "KernelOrder":
        return cls(q=q, p=p)

    @property
    def target(self) -> np.ndarray:
        """q!·e_q, the right-hand side of the moment conditions."""
        e = np.zeros(self.p)
        e[self.q] = math.factorial(self.q)
        return e

    @property
    def is_preferred(self) -> bool:
        return (self.p - self.q) % 2 == 0

    def __str__(self) -> str:
        return f"({self.q},{self.p})"


def moment_matrix(offsets: np.ndarray, columns: int) -> np.ndarray:
    """N×columns matrix whose m-th column is s^m."""
    return np.vander(np.asarray(offsets, dtype=float), N=columns, increasing=True)


@dataclass(frozen=True, eq=False)
class Kernel:
    """Discrete kernel μ_j applied at offsets s_j = (t − t_j)/h.

    ``nh`` is the number of samples per halfwidth (N·h); m₂ = ‖μ‖²·Nh.
    """

    weights: np.ndarray
    offsets: np.ndarray
    order: KernelOrder
    halfwidth: float
    nh: float
    shape: KernelShape = KernelShape.MINIMAL_VARIANCE

    def moment(self, m: int) -> float:
        return float(np.dot(self.weights, self.offsets ** m))

    @property
    def c_qp(self) -> float:
        return self.moment(self.order.p) / math.factorial(self.order.p)

    @property
    def m2(self) -> float:
        return float(np.dot(self.weights, self.weights) * self.nh)

    @property
    def lags(self) -> np.ndarray:
        """Sample lags t_j − t in units of the sampling step."""
        return -self.offsets * self.nh

    def moment_residual(self) -> float:
        S = moment_matrix(self.offsets, self.order.p)
        return float(np.max(np.abs(S.T @ self.weights - self.order.target)))


@dataclass(frozen=True, eq=False)
class KernelDesignProblem:
    """Minimise μᵀR̄μ subject to Sᵀμ = q!·e_q."""

    order: KernelOrder
    gram: np.ndarray
    moment_matrix: np.ndarray
    target: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.target is None:
            object.__setattr__(self, "target", self.order.target)
