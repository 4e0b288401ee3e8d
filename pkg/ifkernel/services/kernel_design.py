"""Kernel design: minimal-variance, minimal-loss, optimal (Legendre), boundary and taper kernels.

Every design path returns a :class:`Kernel` whose weights satisfy the moment conditions

    Σ_j μ_j s_j^m = q!·δ_{m,q},  m = 0..p−1,   s_j = (t − t_j)/h

to within ``settings.MOMENT_TOLERANCE``.
"""

import math
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import linalg
from scipy.special import eval_legendre

from ifkernel.core.config import settings
from ifkernel.core.errors import DesignInfeasibleError, InvalidCovarianceError, UnsupportedOrderError
from ifkernel.schemas.kernel import (
    Kernel,
    KernelDesignProblem,
    KernelOrder,
    KernelShape,
    ensure_smoother_shape,
    moment_matrix,
)
from ifkernel.schemas.noise import covariance_matrix

logger = structlog.get_logger(__name__)


def _as_offsets(offsets: Sequence[float], order: KernelOrder) -> np.ndarray:
    s = np.asarray(offsets, dtype=float)
    if s.ndim != 1:
        raise ValueError("offsets must be one-dimensional")
    if np.unique(s).size != s.size:
        raise DesignInfeasibleError("offsets must be distinct")
    if s.size < order.p:
        raise DesignInfeasibleError(f"order {order} needs at least {order.p} offsets, got {s.size}")
    return s


def _infer_nh(offsets: np.ndarray) -> float:
    """Samples per unit offset, from the median offset spacing."""
    if offsets.size < 2:
        return 1.0
    return float(1.0 / np.median(np.diff(np.sort(offsets))))


def _check_result(weights: np.ndarray, offsets: np.ndarray, order: KernelOrder) -> None:
    S = moment_matrix(offsets, order.p)
    residual = np.max(np.abs(S.T @ weights - order.target))
    if not np.isfinite(residual) or residual > settings.MOMENT_TOLERANCE:
        raise DesignInfeasibleError(f"moment conditions violated by {residual:.3e} for order {order}")


def solve_design_problem(problem: KernelDesignProblem) -> Tuple[np.ndarray, np.ndarray]:
    """Solve μ = R̄⁻¹S(SᵀR̄⁻¹S)⁻¹·target by Cholesky factorization of R̄.

    Returns the weights and the inverse Gram (SᵀR̄⁻¹S)⁻¹ used for the minimal loss value.
    """
    gram = np.real(np.asarray(problem.gram))
    S = problem.moment_matrix
    if gram.shape != (S.shape[0], S.shape[0]):
        raise ValueError("gram and moment matrix sizes disagree")
    if not np.allclose(gram, gram.T, rtol=1e-10, atol=1e-14):
        raise InvalidCovarianceError("covariance matrix is not symmetric")
    if np.linalg.matrix_rank(S) < S.shape[1]:
        raise DesignInfeasibleError(f"moment matrix is rank deficient for order {problem.order}")

    try:
        factor = linalg.cho_factor(gram, lower=True)
    except linalg.LinAlgError as exc:
        raise InvalidCovarianceError("covariance matrix is not positive definite") from exc

    Y = linalg.cho_solve(factor, S)
    G = S.T @ Y
    condition = np.linalg.cond(G)
    if condition > settings.CONDITION_LIMIT:
        raise DesignInfeasibleError(f"constraint system condition {condition:.2e} exceeds limit")

    G_inv = linalg.inv(G, check_finite=True)
    weights = Y @ (G_inv @ problem.target)
    return weights, G_inv


def minimal_design_loss(problem: KernelDesignProblem) -> float:
    """targetᵀ(SᵀR̄⁻¹S)⁻¹target, the minimum of μᵀR̄μ over the constraint set."""
    _, G_inv = solve_design_problem(problem)
    return float(problem.target @ G_inv @ problem.target)


def quadratic_loss(kernel: Kernel, gram: np.ndarray) -> float:
    return float(np.real(kernel.weights @ gram @ kernel.weights))


def design_minimal_variance_kernel(
    order: KernelOrder,
    offsets: Sequence[float],
    halfwidth: float = 1.0,
    nh: Optional[float] = None,
    covariance=None,
) -> Kernel:
    """Minimal-variance kernel: R̄ = σ²·I, or the noise covariance on the offsets if given."""
    s = _as_offsets(offsets, order)
    nh = _infer_nh(s) if nh is None else float(nh)
    if covariance is None:
        gram = np.eye(s.size)
    else:
        gram = covariance_matrix(covariance, -s * nh)
    problem = KernelDesignProblem(order=order, gram=gram, moment_matrix=moment_matrix(s, order.p))
    weights, _ = solve_design_problem(problem)
    _check_result(weights, s, order)
    return Kernel(weights=weights, offsets=s, order=order, halfwidth=halfwidth, nh=nh,
                  shape=KernelShape.MINIMAL_VARIANCE)


def minimal_loss_gram(order: KernelOrder, offsets: np.ndarray, covariance, curvature: float,
                      halfwidth: float, nh: float) -> np.ndarray:
    """R̄ = R + (|∂_t^p g|·h^p/p!)²·s^(p)s^(p)ᵀ on the given offsets."""
    R = np.real(covariance_matrix(covariance, -offsets * nh))
    s_p = offsets ** order.p
    weight = curvature * halfwidth ** order.p / math.factorial(order.p)
    return R + weight ** 2 * np.outer(s_p, s_p)


def design_minimal_loss_kernel(
    order: KernelOrder,
    offsets: Sequence[float],
    covariance,
    curvature: float,
    halfwidth: float = 1.0,
    nh: Optional[float] = None,
) -> Kernel:
    """Minimal-loss kernel: the minimal-variance problem with a rank-one bias update.

    ``curvature`` is |∂_t^p g|; the loss μᵀR̄μ is in units of the estimate times h^{2q}.
    """
    if curvature < 0:
        raise ValueError("curvature must be nonnegative")
    s = _as_offsets(offsets, order)
    nh = _infer_nh(s) if nh is None else float(nh)
    gram = minimal_loss_gram(order, s, covariance, curvature, halfwidth, nh)
    problem = KernelDesignProblem(order=order, gram=gram, moment_matrix=moment_matrix(s, order.p))
    weights, _ = solve_design_problem(problem)
    _check_result(weights, s, order)
    return Kernel(weights=weights, offsets=s, order=order, halfwidth=halfwidth, nh=nh,
                  shape=KernelShape.MINIMAL_LOSS)


def _constrained_combination(basis: np.ndarray, offsets: np.ndarray, order: KernelOrder,
                             end_rows: np.ndarray) -> np.ndarray:
    """Coefficients c of μ = basis·c with exact moments and least-squares end conditions.

    The moment conditions are solved exactly; the end conditions (rows of ``end_rows``
    acting on c) are then met as closely as possible within the moments' null space.
    """
    A = moment_matrix(offsets, order.p).T @ basis
    if np.linalg.matrix_rank(A) < order.p:
        raise DesignInfeasibleError(f"basis cannot satisfy the moment conditions of order {order}")
    condition = np.linalg.cond(A)
    if condition > settings.CONDITION_LIMIT:
        raise DesignInfeasibleError(f"constraint system condition {condition:.2e} exceeds limit")
    c0 = np.linalg.lstsq(A, order.target, rcond=None)[0]
    Z = linalg.null_space(A)
    if Z.shape[1] == 0 or end_rows.size == 0:
        return c0
    w = np.linalg.lstsq(end_rows @ Z, -end_rows @ c0, rcond=None)[0]
    return c0 + Z @ w


def design_optimal_kernel(
    order: KernelOrder,
    offsets: Sequence[float],
    halfwidth: float = 1.0,
    nh: Optional[float] = None,
    vanish_left: bool = True,
    vanish_right: bool = True,
) -> Kernel:
    """Discrete optimal kernel: a degree-p polynomial in s that vanishes at the support ends.

    This is the minimal-loss kernel at the balancing curvature (the discrete analog of
    γ[P_q − P_{q+2}]). ``vanish_left`` refers to s = +1 (t_j = t − h), ``vanish_right`` to
    s = −1. With neither end free to vanish it falls back to the minimal-variance kernel.
    """
    s = _as_offsets(offsets, order)
    nh = _infer_nh(s) if nh is None else float(nh)
    if not (vanish_left or vanish_right):
        kernel = design_minimal_variance_kernel(order, s, halfwidth=halfwidth, nh=nh)
        return Kernel(weights=kernel.weights, offsets=s, order=order, halfwidth=halfwidth, nh=nh,
                      shape=KernelShape.OPTIMAL)

    degree = order.p + 1
    basis = moment_matrix(s, degree)
    ends = [e for e, keep in ((1.0, vanish_left), (-1.0, vanish_right)) if keep]
    end_rows = moment_matrix(np.asarray(ends), degree)
    weights = basis @ _constrained_combination(basis, s, order, end_rows)
    _check_result(weights, s, order)
    return Kernel(weights=weights, offsets=s, order=order, halfwidth=halfwidth, nh=nh,
                  shape=KernelShape.OPTIMAL)


def legendre_gamma(q: int) -> float:
    """γ = Π_{k=1}^{q+1} (q+k)/2."""
    return float(np.prod([(q + k) / 2.0 for k in range(1, q + 2)]))


def legendre_shape(q: int, s) -> np.ndarray:
    """Continuous limiting kernel γ[P_q(s) − P_{q+2}(s)] on [−1, 1]."""
    s = np.asarray(s, dtype=float)
    return legendre_gamma(q) * (eval_legendre(q, s) - eval_legendre(q + 2, s))


def legendre_kernel(order: KernelOrder, halfwidth: float, grid_count: int) -> Kernel:
    """Sampled Legendre kernel projected onto the exact discrete moment conditions."""
    if order.p != order.q + 2:
        raise UnsupportedOrderError(f"Legendre kernels need p = q + 2, got {order}")
    if grid_count < order.p + 1:
        raise DesignInfeasibleError(f"grid_count must be at least {order.p + 1}")

    s = np.linspace(-1.0, 1.0, grid_count)
    nh = (grid_count - 1) / 2.0
    weights = legendre_shape(order.q, s) / nh

    # minimum-norm correction onto {μ : Sᵀμ = q!e_q}
    S = moment_matrix(s, order.p)
    defect = order.target - S.T @ weights
    weights = weights + S @ np.linalg.lstsq(S.T @ S, defect, rcond=None)[0]
    _check_result(weights, s, order)
    return Kernel(weights=weights, offsets=s, order=order, halfwidth=halfwidth, nh=nh,
                  shape=KernelShape.OPTIMAL)


def window_offsets(times: np.ndarray, estimation_point: float, halfwidth: float):
    """Offsets of the samples inside [t − h, t + h] and the truncation of each side."""
    times = np.asarray(times, dtype=float)
    step = times[1] - times[0]
    slack = 1e-9 * step
    inside = np.abs(times - estimation_point) <= halfwidth + slack
    offsets = (estimation_point - times[inside]) / halfwidth
    left_truncated = estimation_point - halfwidth < times[0] - slack
    right_truncated = estimation_point + halfwidth > times[-1] + slack
    return np.flatnonzero(inside), offsets, left_truncated, right_truncated


def design_boundary_kernel(
    order: KernelOrder,
    estimation_point: float,
    halfwidth: float,
    times: Sequence[float],
    shape: KernelShape = KernelShape.OPTIMAL,
) -> Kernel:
    """Kernel on the window [t − h, t + h] truncated at the data boundary.

    Minimal-variance shape solves (B5) on the truncated support; the optimal shape keeps the
    vanishing condition only at untruncated ends. At an interior point both reduce to the
    interior kernel.
    """
    ensure_smoother_shape(shape)
    times = np.asarray(times, dtype=float)
    _, s, left_truncated, right_truncated = window_offsets(times, estimation_point, halfwidth)
    if s.size < order.p:
        raise DesignInfeasibleError(
            f"window at t={estimation_point:.4g} holds {s.size} samples, order {order} needs {order.p}"
        )
    nh = halfwidth / (times[1] - times[0])
    if shape == KernelShape.MINIMAL_VARIANCE:
        return design_minimal_variance_kernel(order, s, halfwidth=halfwidth, nh=nh)
    return design_optimal_kernel(order, s, halfwidth=halfwidth, nh=nh,
                                 vanish_left=not left_truncated, vanish_right=not right_truncated)


def sinusoidal_taper(length: int, k: int) -> np.ndarray:
    """v_n^(k) = √(2/(N+1))·sin(πkn/(N+1)), n = 1..N."""
    n = np.arange(1, length + 1)
    return np.sqrt(2.0 / (length + 1)) * np.sin(np.pi * k * n / (length + 1))


def sinusoidal_taper_kernel(order: KernelOrder, length: int, sample_rate: Optional[float] = None) -> Kernel:
    """Combination of the first p+1 sinusoidal tapers satisfying the moment conditions
    and vanishing at both ends of its support."""
    if length < order.p + 1:
        raise DesignInfeasibleError(f"taper kernels of order {order} need length ≥ {order.p + 1}")
    if length < 3:
        raise DesignInfeasibleError("taper kernels need at least 3 points")

    n = np.arange(1, length + 1)
    nh = (length - 1) / 2.0
    s = ((length + 1) / 2.0 - n) / nh
    basis = np.column_stack([sinusoidal_taper(length, k) for k in range(1, order.p + 2)])
    end_rows = basis[[0, -1], :]
    try:
        coefficients = _constrained_combination(basis, s, order, end_rows)
    except np.linalg.LinAlgError as exc:
        raise DesignInfeasibleError(f"taper combination system is singular: {exc}") from exc
    weights = basis @ coefficients
    _check_result(weights, s, order)
    halfwidth = nh / sample_rate if sample_rate else 1.0
    return Kernel(weights=weights, offsets=s, order=order, halfwidth=halfwidth, nh=nh,
                  shape=KernelShape.TAPER)


def kernel_moment(kernel: Kernel, m: int) -> float:
    if m < 0:
        raise ValueError("moment index must be nonnegative")
    return kernel.moment(m)


def kernel_m2(kernel: Kernel) -> float:
    return kernel.m2


def kernel_spectrum(kernel: Kernel, frequencies) -> np.ndarray:
    """U(ω) = Σ_j μ_j e^{−iω·lag_j}, ω in rad/sample, lag_j = (t_j − t)·N."""
    omega = np.atleast_1d(np.asarray(frequencies, dtype=float))
    return np.exp(-1j * np.multiply.outer(omega, kernel.lags)) @ kernel.weights


@lru_cache(maxsize=64)
def kernel_constants(order: KernelOrder, shape: KernelShape = KernelShape.OPTIMAL,
                     grid_count: int = 2001) -> Tuple[float, float]:
    """Continuum-accurate (m₂, C_{q,p}) of the interior kernel of a given shape."""
    ensure_smoother_shape(shape)
    s = np.linspace(-1.0, 1.0, grid_count)
    if shape == KernelShape.TAPER:
        kernel = sinusoidal_taper_kernel(order, grid_count)
    elif shape == KernelShape.MINIMAL_VARIANCE:
        kernel = design_minimal_variance_kernel(order, s)
    elif order.p == order.q + 2:
        kernel = legendre_kernel(order, 1.0, grid_count)
    else:
        kernel = design_optimal_kernel(order, s)
    return kernel.m2, kernel.c_qp


@lru_cache(maxsize=4096)
def design_window_kernel(order: KernelOrder, shape: KernelShape, nh: float, left: int, right: int,
                         sample_rate: float) -> Kernel:
    """Kernel on integer sample lags −left..right around a grid point.

    ``nh`` is the halfwidth in samples; a side is truncated when it holds fewer than
    ⌊nh⌋ samples.
    """
    ensure_smoother_shape(shape)
    full = int(np.floor(nh + 1e-9))
    left_truncated = left < full
    right_truncated = right < full
    lags = np.arange(-left, right + 1)
    s = -lags / nh
    halfwidth = nh / sample_rate
    if s.size < order.p:
        raise DesignInfeasibleError(f"window holds {s.size} samples, order {order} needs {order.p}")

    if shape == KernelShape.TAPER and not (left_truncated or right_truncated):
        kernel = sinusoidal_taper_kernel(order, 2 * full + 1, sample_rate=sample_rate)
        # taper support is ±full samples; express offsets against the family halfwidth
        return Kernel(weights=_rescale_weights(kernel, full, nh), offsets=kernel.offsets * full / nh,
                      order=order, halfwidth=halfwidth, nh=nh, shape=KernelShape.TAPER)
    if shape == KernelShape.MINIMAL_VARIANCE:
        return design_minimal_variance_kernel(order, s, halfwidth=halfwidth, nh=nh)
    return design_optimal_kernel(order, s, halfwidth=halfwidth, nh=nh,
                                 vanish_left=not left_truncated, vanish_right=not right_truncated)


def _rescale_weights(kernel: Kernel, support: int, nh: float) -> np.ndarray:
    """Weights of the same filter expressed with offsets scaled by support/nh.

    Σ μ_j (a·s_j)^m = q!δ_{m,q} requires μ'_j = μ_j / a^q.
    """
    scale = support / nh
    return kernel.weights / scale ** kernel.order.q
