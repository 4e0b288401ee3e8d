"""Multistage plug-in halfwidth selection.

Stages: characteristic-scale pilot halfwidth, pilot derivative with a (p, p+2) kernel,
robust smoothing of the squared pilot, pointwise plug-in halfwidths, final smoothing.
"""

from typing import Optional, Sequence

import numpy as np
import structlog
from scipy import ndimage
from scipy import signal as sps

from ifkernel.core.config import settings
from ifkernel.core.errors import InsufficientDataError
from ifkernel.core.metrics import stage_timer
from ifkernel.schemas.estimate import HalfwidthSelection, MultistageResult, ScaleAnsatz
from ifkernel.schemas.kernel import Kernel, KernelOrder, KernelShape
from ifkernel.schemas.noise import White
from ifkernel.schemas.signal import SampledSignal
from ifkernel.services.kernel_design import design_window_kernel, kernel_constants
from ifkernel.services.smoothing import (
    KernelFamily,
    estimate_noise_variance,
    halfwidth_bounds,
    noise_level,
    optimal_halfwidth,
    smooth_series,
    smooth_varying,
)

logger = structlog.get_logger(__name__)

SMOOTHING_ORDER = KernelOrder.of(0, 2)


def default_ansatz(values: Sequence) -> ScaleAnsatz:
    """Ā = sample standard deviation, τ from settings."""
    spread = float(np.std(np.asarray(values)))
    return ScaleAnsatz(amplitude=max(spread, np.finfo(float).tiny), time_scale=settings.DEFAULT_TIME_SCALE)


def characteristic_scale_halfwidth(ansatz: ScaleAnsatz, order: KernelOrder, covariance, sample_count: int,
                                   m2: float, c_qp: float) -> HalfwidthSelection:
    """Optimal halfwidth with |∂_t^p g| replaced by Ā/τ^p."""
    return optimal_halfwidth(order, covariance, ansatz.curvature(order.p), sample_count, m2, c_qp)


def pilot_derivative(signal: SampledSignal, target_p: int, pilot_halfwidth: float,
                     shape: KernelShape = KernelShape.OPTIMAL) -> np.ndarray:
    """Estimate ∂_t^p g on the grid with a (p, p+2) kernel."""
    order = KernelOrder.of(target_p, target_p + 2)
    span = 2 * int(np.floor(pilot_halfwidth * signal.rate + 1e-9)) + 1
    if span < order.p + 1:
        raise InsufficientDataError(f"pilot window spans {span} samples, order {order} needs {order.p + 1}")
    return smooth_series(signal, KernelFamily(order=order, halfwidth=pilot_halfwidth, shape=shape))


def robust_kernel(smoother_halfwidth: float, sample_rate: float) -> Kernel:
    """Nonnegative (0,2) kernel G of unit mass on the sample grid."""
    nh = max(smoother_halfwidth * sample_rate, 1.0)
    reach = int(np.floor(nh + 1e-9))
    return design_window_kernel(SMOOTHING_ORDER, KernelShape.OPTIMAL, nh, reach, reach, sample_rate)


def robust_curvature(squared_pilot: Sequence[float], smoother_halfwidth: float, sample_rate: float,
                     kernel: Optional[Kernel] = None) -> np.ndarray:
    """Convolve |∂̂_t^p g|² with G, renormalizing by the kernel mass inside the record."""
    squared = np.asarray(squared_pilot, dtype=float)
    G = robust_kernel(smoother_halfwidth, sample_rate) if kernel is None else kernel
    if abs(G.moment(0) - 1.0) > 1e-8:
        raise ValueError("robust smoothing kernel must have unit mass")
    if np.any(G.weights < -1e-12):
        raise ValueError("robust smoothing kernel must be nonnegative")
    weights = np.clip(G.weights, 0.0, None)[::-1]
    total = sps.convolve(squared, weights, mode="same", method="direct")
    mass = sps.convolve(np.ones_like(squared), weights, mode="same", method="direct")
    return np.maximum(total / mass, 0.0)


def floored_curvature(squared_pilot: Sequence[float], floor: float) -> np.ndarray:
    """Upper-cutoff alternative: raise the squared pilot to at least ``floor``."""
    if floor < 0:
        raise ValueError("curvature floor must be nonnegative")
    return np.maximum(np.asarray(squared_pilot, dtype=float), floor)


def plugin_halfwidths(order: KernelOrder, covariance, squared_curvature: Sequence[float], sample_count: int,
                      m2: float, c_qp: float, median_window: Optional[int] = None,
                      center_frequency: float = 0.0) -> np.ndarray:
    """Pointwise optimal halfwidths with |∂_t^p g|² taken from ``squared_curvature``.

    Values are clipped to the halfwidth bounds (zero curvature maps to h_max) and then
    median filtered over ``median_window`` neighbours.
    """
    q, p = order.q, order.p
    curvature = np.asarray(squared_curvature, dtype=float)
    h_min, h_max = halfwidth_bounds(order, sample_count)
    sigma2 = noise_level(covariance, center_frequency, sample_count)
    ratio = (2 * q + 1) / (2 * (p - q))
    with np.errstate(divide="ignore"):
        raw = (ratio * sigma2 * m2 / (c_qp ** 2 * curvature * sample_count)) ** (1.0 / (2 * p + 1))
    raw = np.where(curvature > 0, raw, h_max)
    halfwidths = np.clip(np.nan_to_num(raw, nan=h_max, posinf=h_max), h_min, h_max)

    window = settings.HALFWIDTH_MEDIAN_WINDOW if median_window is None else median_window
    if window > 1:
        halfwidths = ndimage.median_filter(halfwidths, size=window, mode="nearest")
    return halfwidths


def multistage_estimate(signal: SampledSignal, final_q: int, ansatz: Optional[ScaleAnsatz] = None, noise=None,
                        shape: KernelShape = KernelShape.OPTIMAL,
                        curvature_floor: Optional[float] = None) -> MultistageResult:
    """Run the (q+2, q+4) → (q, q+2) ladder and return the final estimate with its halfwidths."""
    if final_q not in (0, 1):
        raise ValueError("the multistage ladder supports final_q in {0, 1}")
    final_order = KernelOrder.of(final_q, final_q + 2)
    p = final_order.p
    pilot_order = KernelOrder.of(p, p + 2)
    n = signal.sample_count

    ansatz = default_ansatz(signal.values) if ansatz is None else ansatz
    noise = White(sigma2=estimate_noise_variance(signal.values)) if noise is None else noise
    m2_pilot, c_pilot = kernel_constants(pilot_order, KernelShape.OPTIMAL)
    m2, c_qp = kernel_constants(final_order, shape)

    with stage_timer("pilot"):
        pilot_h = characteristic_scale_halfwidth(ansatz, pilot_order, noise, n, m2_pilot, c_pilot).halfwidth
        pilot = pilot_derivative(signal, p, pilot_h)
        squared = np.abs(pilot) ** 2

    with stage_timer("curvature"):
        raw = plugin_halfwidths(final_order, noise, squared, n, m2, c_qp, median_window=1)
        smoother_h = float(np.max(raw))
        if curvature_floor is not None:
            curvature = floored_curvature(squared, curvature_floor)
        else:
            curvature = robust_curvature(squared, smoother_h, signal.rate)

    with stage_timer("final"):
        halfwidths = plugin_halfwidths(final_order, noise, curvature, n, m2, c_qp)
        estimate = smooth_varying(signal, final_order, halfwidths, shape)

    logger.info(
        "multistage_complete",
        final_order=str(final_order),
        pilot_halfwidth=pilot_h,
        smoother_halfwidth=smoother_h,
        halfwidth_min=float(halfwidths.min()),
        halfwidth_max=float(halfwidths.max()),
    )
    return MultistageResult(
        estimate=estimate,
        halfwidths=halfwidths,
        pilot=pilot,
        curvature=curvature,
        pilot_halfwidth=pilot_h,
        smoother_halfwidth=smoother_h,
    )
