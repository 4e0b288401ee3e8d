"""Kernel smoothing of sampled data and the leading-order bias/variance/halfwidth formulas"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import signal as sps
from scipy.integrate import trapezoid

from ifkernel.core.config import settings
from ifkernel.core.errors import InsufficientDataError
from ifkernel.schemas.estimate import HalfwidthSelection, LossReport
from ifkernel.schemas.kernel import Kernel, KernelOrder, KernelShape, ensure_smoother_shape
from ifkernel.schemas.noise import HilbertPhase, Spectral, StationaryLag, White, covariance_matrix
from ifkernel.schemas.signal import SampledSignal
from ifkernel.services.kernel_design import design_boundary_kernel, design_window_kernel, kernel_spectrum

logger = structlog.get_logger(__name__)

# halfwidths in samples are rounded to this step when they vary along the record
NH_QUANTUM = 0.25


@dataclass(frozen=True)
class KernelFamily:
    """Interior kernel of a given order, shape and halfwidth plus its boundary variants."""

    order: KernelOrder
    halfwidth: float
    shape: KernelShape = KernelShape.OPTIMAL

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise ValueError("halfwidth must be positive")
        ensure_smoother_shape(self.shape)

    def window_kernel(self, signal: SampledSignal, index: int) -> Kernel:
        """Kernel centred on grid sample ``index``, truncated at the record ends."""
        nh = self.halfwidth * signal.rate
        reach = int(np.floor(nh + 1e-9))
        left = min(index, reach)
        right = min(signal.sample_count - 1 - index, reach)
        return design_window_kernel(self.order, self.shape, nh, left, right, signal.rate)

    def kernel_at(self, signal: SampledSignal, t: float) -> Kernel:
        index = _grid_index(signal, t)
        if index is not None:
            return self.window_kernel(signal, index)
        return design_boundary_kernel(self.order, t, self.halfwidth, signal.times, self.shape)


def _grid_index(signal: SampledSignal, t: float) -> Optional[int]:
    position = (t - signal.times[0]) / signal.step
    index = int(round(position))
    if abs(position - index) < 1e-9 and 0 <= index < signal.sample_count:
        return index
    return None


def _sample_indices(signal: SampledSignal, kernel: Kernel, t: float) -> Optional[np.ndarray]:
    """Indices of the samples a kernel touches at t, or None if it does not fit the record."""
    positions = (t - kernel.offsets * kernel.halfwidth - signal.times[0]) / signal.step
    indices = np.rint(positions)
    if np.any(np.abs(positions - indices) > 1e-6):
        return None
    if indices.min() < 0 or indices.max() > signal.sample_count - 1:
        return None
    return indices.astype(int)


def _apply(kernel: Kernel, values: np.ndarray, halfwidth: float):
    q = kernel.order.q
    return (-1) ** q * np.dot(kernel.weights, values) / halfwidth ** q


def smooth_at(signal: SampledSignal, kernel, t: float):
    """Estimate ∂_t^q g(t) as (−1)^q Σ μ_j y_j / h^q.

    ``kernel`` is a :class:`Kernel` or a :class:`KernelFamily`; a kernel that does not fit
    the record at t is replaced by the boundary kernel of the same order, shape and halfwidth.
    """
    inside = np.abs(signal.times - t) <= (kernel.halfwidth * (1 + 1e-12))
    if not np.any(inside):
        raise InsufficientDataError(f"no samples within the kernel window at t={t:.6g}")

    if isinstance(kernel, KernelFamily):
        kernel = kernel.kernel_at(signal, t)
    indices = _sample_indices(signal, kernel, t)
    if indices is None:
        kernel = design_boundary_kernel(kernel.order, t, kernel.halfwidth, signal.times, kernel.shape)
        indices = _sample_indices(signal, kernel, t)
        if indices is None:
            raise InsufficientDataError(f"boundary kernel does not fit the sample grid at t={t:.6g}")
    return _apply(kernel, signal.values[indices], kernel.halfwidth)


def _smooth_grid(signal: SampledSignal, family: KernelFamily) -> np.ndarray:
    values = signal.values
    n = signal.sample_count
    nh = family.halfwidth * signal.rate
    reach = int(np.floor(nh + 1e-9))
    if 2 * reach + 1 < family.order.p:
        raise InsufficientDataError(
            f"halfwidth {family.halfwidth:.4g} spans {2 * reach + 1} samples, order {family.order} needs {family.order.p}"
        )
    sign = (-1) ** family.order.q / family.halfwidth ** family.order.q
    out = np.empty(n, dtype=np.result_type(values.dtype, float))

    if n > 2 * reach:
        interior = family.window_kernel(signal, reach)
        # weights are ordered by lag −reach..reach
        out[reach:n - reach] = sign * sps.correlate(values, interior.weights, mode="valid")
        edge = list(range(reach)) + list(range(n - reach, n))
    else:
        edge = range(n)
    for index in edge:
        kernel = family.window_kernel(signal, index)
        lags = np.rint(kernel.lags).astype(int)
        out[index] = sign * np.dot(kernel.weights, values[index + lags])
    return out


def smooth_series(signal: SampledSignal, family: KernelFamily, evaluation_times: Optional[Sequence[float]] = None) -> np.ndarray:
    """Vectorized :func:`smooth_at` over evaluation times (default: the sample grid)."""
    if evaluation_times is None:
        return _smooth_grid(signal, family)
    times = np.asarray(evaluation_times, dtype=float)
    if times.size == 0:
        return np.empty(0, dtype=np.result_type(signal.values.dtype, float))
    if times.shape == signal.times.shape and np.allclose(times, signal.times, rtol=0, atol=1e-12):
        return _smooth_grid(signal, family)
    return np.array([smooth_at(signal, family, t) for t in times])


def _varying_windows(signal: SampledSignal, order: KernelOrder, halfwidths: Sequence[float], shape: KernelShape):
    """Yield (index, kernel, left, right, h) for per-sample halfwidths quantized to NH_QUANTUM samples."""
    halfwidths = np.asarray(halfwidths, dtype=float)
    if halfwidths.shape != signal.times.shape:
        raise ValueError("one halfwidth per sample is required")
    nh_all = np.maximum(np.round(halfwidths * signal.rate / NH_QUANTUM) * NH_QUANTUM, float(order.p))
    n = signal.sample_count
    for index in range(n):
        nh = float(nh_all[index])
        reach = int(np.floor(nh + 1e-9))
        left = min(index, reach)
        right = min(n - 1 - index, reach)
        kernel = design_window_kernel(order, shape, nh, left, right, signal.rate)
        yield index, kernel, left, right, nh / signal.rate


def smooth_varying(signal: SampledSignal, order: KernelOrder, halfwidths: Sequence[float],
                   shape: KernelShape = KernelShape.OPTIMAL) -> np.ndarray:
    """Grid smoothing with a separate halfwidth at every sample.

    Halfwidths in samples are quantized to a quarter sample so that windows repeat and the
    designed kernels are shared through the design cache.
    """
    values = signal.values
    out = np.empty(signal.sample_count, dtype=np.result_type(values.dtype, float))
    for index, kernel, left, right, h in _varying_windows(signal, order, halfwidths, shape):
        out[index] = _apply(kernel, values[index - left:index + right + 1], h)
    return out


def window_constants(signal: SampledSignal, order: KernelOrder, halfwidths, shape: KernelShape = KernelShape.OPTIMAL,
                     varying: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """(m₂, C_{q,p}) of the kernel applied at every grid sample, boundary kernels included.

    A scalar halfwidth follows :func:`smooth_series`; with ``varying`` there is one halfwidth
    per sample and the windows follow :func:`smooth_varying`.
    """
    n = signal.sample_count
    m2 = np.empty(n)
    c_qp = np.empty(n)
    if varying:
        for index, kernel, _, _, _ in _varying_windows(signal, order, halfwidths, shape):
            m2[index], c_qp[index] = kernel.m2, kernel.c_qp
        return m2, c_qp
    family = KernelFamily(order=order, halfwidth=float(halfwidths), shape=shape)
    for index in range(n):
        kernel = family.window_kernel(signal, index)
        m2[index], c_qp[index] = kernel.m2, kernel.c_qp
    return m2, c_qp


def halfwidth_bounds(order: KernelOrder, sample_count: int) -> Tuple[float, float]:
    """h_min = (p+1)/N so the window holds p+1 points; h_max from settings."""
    return (order.p + 1) / sample_count, settings.HALFWIDTH_MAX


def noise_level(covariance, center_frequency: float, sample_count: int) -> float:
    if isinstance(covariance, Spectral):
        return covariance.variance(center_frequency / sample_count)
    return covariance.variance(center_frequency)


def predicted_variance(kernel: Kernel, covariance, sample_count: int, halfwidth: float,
                       center_frequency: float = 0.0, exact: bool = False) -> float:
    """Variance of the kernel estimate under the given noise model.

    ``center_frequency`` is the demodulation frequency in rad per unit time. The spectral
    model uses S(ω_o)·m₂/(N h^{2q+1}) unless ``exact`` asks for the full frequency integral.
    """
    q = kernel.order.q
    scale = halfwidth ** (2 * q)
    if isinstance(covariance, (White, HilbertPhase)):
        sigma2 = covariance.variance()
        return sigma2 * kernel.m2 / (sample_count * halfwidth ** (2 * q + 1))

    if isinstance(covariance, StationaryLag):
        lags = kernel.lags
        R = covariance_matrix(covariance, lags)
        phase = np.exp(1j * center_frequency * np.subtract.outer(lags, lags) / sample_count)
        return float(np.real(kernel.weights @ (R * phase.T) @ kernel.weights)) / scale

    if isinstance(covariance, Spectral):
        omega_o = center_frequency / sample_count
        if not exact:
            return covariance.variance(omega_o) * kernel.m2 / (sample_count * halfwidth ** (2 * q + 1))
        omega = np.linspace(-np.pi, np.pi, settings.SPECTRAL_QUADRATURE_POINTS)
        response = np.abs(kernel_spectrum(kernel, omega - omega_o)) ** 2
        return float(trapezoid(covariance.density(omega) * response, omega) / (2 * np.pi)) / scale

    raise TypeError(f"unsupported covariance model {type(covariance).__name__}")


def predicted_bias(kernel: Kernel, pth_derivative: float, halfwidth: float) -> float:
    """Leading bias (−1)^{p−q}·C_{q,p}·∂_t^p g·h^{p−q}; the sign is +1 for p−q even."""
    order = kernel.order
    return (-1) ** (order.p - order.q) * kernel.c_qp * pth_derivative * halfwidth ** (order.p - order.q)


def expected_loss(kernel: Kernel, covariance, pth_derivative: float, sample_count: int, halfwidth: float,
                  center_frequency: float = 0.0, exact: bool = False) -> LossReport:
    bias = predicted_bias(kernel, pth_derivative, halfwidth)
    variance = predicted_variance(kernel, covariance, sample_count, halfwidth, center_frequency, exact)
    return LossReport(bias_squared=bias ** 2, variance=variance, halfwidth=halfwidth, order=kernel.order)


def optimal_halfwidth(order: KernelOrder, covariance, pth_derivative: float, sample_count: int,
                      m2: float, c_qp: float, center_frequency: float = 0.0) -> HalfwidthSelection:
    """h_o = [(2q+1)/(2(p−q))·σ²m₂/(C²N|∂_t^p g|²)]^{1/(2p+1)} clipped to the halfwidth bounds."""
    q, p = order.q, order.p
    h_min, h_max = halfwidth_bounds(order, sample_count)
    curvature = c_qp ** 2 * pth_derivative ** 2
    if curvature == 0 or not np.isfinite(curvature):
        logger.warning("degenerate_curvature", order=str(order), pth_derivative=pth_derivative)
        return HalfwidthSelection(halfwidth=h_max, unclipped=math.inf, clipped=True, degenerate=True)

    sigma2 = noise_level(covariance, center_frequency, sample_count)
    ratio = (2 * q + 1) / (2 * (p - q))
    unclipped = (ratio * sigma2 * m2 / (curvature * sample_count)) ** (1.0 / (2 * p + 1))
    halfwidth = float(np.clip(unclipped, h_min, h_max))
    clipped = halfwidth != unclipped
    if clipped:
        logger.debug("halfwidth_clipped", order=str(order), unclipped=unclipped, halfwidth=halfwidth)
    return HalfwidthSelection(halfwidth=halfwidth, unclipped=float(unclipped), clipped=clipped)


def loss_constant(order: KernelOrder) -> float:
    """M_{q,p} = r^{2(p−q)/(2p+1)} + r^{−(2q+1)/(2p+1)} with r = (2q+1)/(2(p−q))."""
    q, p = order.q, order.p
    r = (2 * q + 1) / (2 * (p - q))
    return r ** (2 * (p - q) / (2 * p + 1)) + r ** (-(2 * q + 1) / (2 * p + 1))


def minimal_loss_value(order: KernelOrder, covariance, pth_derivative: float, sample_count: int,
                       m2: float, c_qp: float, center_frequency: float = 0.0) -> float:
    """M_{q,p}·|C∂_t^p g|^{2(2q+1)/(2p+1)}·(σ²m₂/N)^{2(p−q)/(2p+1)}, the loss at the unclipped h_o."""
    q, p = order.q, order.p
    sigma2 = noise_level(covariance, center_frequency, sample_count)
    bias_part = abs(c_qp * pth_derivative) ** (2 * (2 * q + 1) / (2 * p + 1))
    noise_part = (sigma2 * m2 / sample_count) ** (2 * (p - q) / (2 * p + 1))
    return loss_constant(order) * bias_part * noise_part


def estimate_noise_variance(values: Sequence) -> float:
    """σ² ≈ Σ|y_{j+1} − y_j|² / (2(N−1)), adequate when the signal varies slowly per sample."""
    values = np.asarray(values)
    if values.size < 2:
        raise InsufficientDataError("noise variance needs at least 2 samples")
    return float(np.sum(np.abs(np.diff(values)) ** 2) / (2 * (values.size - 1)))
