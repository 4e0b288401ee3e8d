"""
Unit tests for kernel design
"""

import math
import os
import sys

import numpy as np
import pytest
from scipy.linalg import null_space

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ifkernel.core.errors import DesignInfeasibleError, InvalidCovarianceError, UnsupportedOrderError
from ifkernel.schemas.kernel import Kernel, KernelDesignProblem, KernelOrder, KernelShape, moment_matrix
from ifkernel.schemas.noise import White
from ifkernel.schemas.requests import DesignKernelRequest
from ifkernel.services.kernel_design import (
    design_boundary_kernel,
    design_minimal_loss_kernel,
    design_minimal_variance_kernel,
    design_optimal_kernel,
    design_window_kernel,
    kernel_constants,
    kernel_m2,
    kernel_moment,
    kernel_spectrum,
    legendre_gamma,
    legendre_kernel,
    legendre_shape,
    minimal_design_loss,
    minimal_loss_gram,
    quadratic_loss,
    sinusoidal_taper,
    sinusoidal_taper_kernel,
    solve_design_problem,
)
from ifkernel.services.multitone import leakage_envelope

SMOOTH = KernelOrder.of(0, 2)
SLOPE = KernelOrder.of(1, 3)


@pytest.fixture
def grid():
    return np.linspace(-1.0, 1.0, 201)


class TestKernelOrder:
    def test_target_is_factorial_unit_vector(self):
        np.testing.assert_array_equal(KernelOrder.of(2, 4).target, [0.0, 0.0, 2.0, 0.0])

    def test_rejects_q_not_below_p(self):
        with pytest.raises(ValueError):
            KernelOrder.of(2, 2)

    def test_preferred_orders_have_even_gap(self):
        assert SMOOTH.is_preferred
        assert not KernelOrder.of(0, 3).is_preferred

    def test_orders_are_hashable_for_caching(self):
        assert KernelOrder.of(0, 2) == SMOOTH
        assert hash(KernelOrder.of(0, 2)) == hash(SMOOTH)


class TestMinimalVariance:
    def test_three_points_give_uniform_weights(self):
        kernel = design_minimal_variance_kernel(SMOOTH, [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(kernel.weights, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_moment_conditions_hold(self, grid):
        for order in (SMOOTH, SLOPE, KernelOrder.of(2, 4)):
            kernel = design_minimal_variance_kernel(order, grid)
            assert kernel.moment_residual() < 1e-10

    def test_symmetry_of_interior_kernels(self, grid):
        smooth = design_minimal_variance_kernel(SMOOTH, grid)
        slope = design_minimal_variance_kernel(SLOPE, grid)
        np.testing.assert_allclose(smooth.weights, smooth.weights[::-1], atol=1e-12)
        np.testing.assert_allclose(slope.weights, -slope.weights[::-1], atol=1e-12)

    def test_too_few_offsets(self):
        with pytest.raises(DesignInfeasibleError):
            design_minimal_variance_kernel(KernelOrder.of(0, 4), [-1.0, 0.0, 1.0])

    def test_repeated_offsets(self):
        with pytest.raises(DesignInfeasibleError):
            design_minimal_variance_kernel(SMOOTH, [-1.0, 0.0, 0.0, 1.0])

    @pytest.mark.parametrize("order", [SMOOTH, SLOPE])
    def test_feasible_perturbations_do_not_lower_norm(self, order):
        s = np.linspace(-1.0, 1.0, 41)
        kernel = design_minimal_variance_kernel(order, s)
        basis = null_space(moment_matrix(s, order.p).T)
        rng = np.random.default_rng(order.q)
        base = np.sum(kernel.weights ** 2)
        for _ in range(50):
            delta = basis @ rng.standard_normal(basis.shape[1]) * 10 ** rng.uniform(-4, 0)
            assert np.sum((kernel.weights + delta) ** 2) >= base - 1e-12

    def test_minimal_design_loss_of_uniform_kernel(self):
        s = np.array([-1.0, 0.0, 1.0])
        problem = KernelDesignProblem(order=SMOOTH, gram=np.eye(3), moment_matrix=moment_matrix(s, 2))
        assert minimal_design_loss(problem) == pytest.approx(1 / 3)


class TestDesignProblem:
    def test_asymmetric_covariance(self):
        s = np.array([-1.0, 0.0, 1.0])
        gram = np.eye(3)
        gram[0, 1] = 0.5
        problem = KernelDesignProblem(order=SMOOTH, gram=gram, moment_matrix=moment_matrix(s, 2))
        with pytest.raises(InvalidCovarianceError):
            solve_design_problem(problem)

    def test_indefinite_covariance(self):
        s = np.array([-1.0, 0.0, 1.0])
        problem = KernelDesignProblem(order=SMOOTH, gram=-np.eye(3), moment_matrix=moment_matrix(s, 2))
        with pytest.raises(InvalidCovarianceError):
            solve_design_problem(problem)


class TestMinimalLoss:
    def test_zero_curvature_is_minimal_variance(self, grid):
        loss = design_minimal_loss_kernel(SMOOTH, grid, White(sigma2=1.0), curvature=0.0)
        variance = design_minimal_variance_kernel(SMOOTH, grid)
        np.testing.assert_allclose(loss.weights, variance.weights, atol=1e-12)

    def test_beats_minimal_variance_under_its_own_loss(self):
        s = np.linspace(-1.0, 1.0, 101)
        nh = 50.0
        noise = White(sigma2=0.01)
        gram = minimal_loss_gram(SMOOTH, s, noise, 10.0, 0.1, nh)
        loss = design_minimal_loss_kernel(SMOOTH, s, noise, curvature=10.0, halfwidth=0.1, nh=nh)
        variance = design_minimal_variance_kernel(SMOOTH, s, halfwidth=0.1, nh=nh)
        assert quadratic_loss(loss, gram) <= quadratic_loss(variance, gram) + 1e-15

    def test_loss_value_matches_inverse_gram(self):
        s = np.linspace(-1.0, 1.0, 21)
        noise = White(sigma2=0.04)
        gram = minimal_loss_gram(SMOOTH, s, noise, 5.0, 0.2, 10.0)
        problem = KernelDesignProblem(order=SMOOTH, gram=gram, moment_matrix=moment_matrix(s, 2))
        kernel = design_minimal_loss_kernel(SMOOTH, s, noise, curvature=5.0, halfwidth=0.2, nh=10.0)
        assert quadratic_loss(kernel, gram) == pytest.approx(minimal_design_loss(problem), rel=1e-9)

    def test_negative_curvature(self, grid):
        with pytest.raises(ValueError):
            design_minimal_loss_kernel(SMOOTH, grid, White(sigma2=1.0), curvature=-1.0)

    def test_labelled_minimal_loss(self, grid):
        kernel = design_minimal_loss_kernel(SMOOTH, grid, White(sigma2=0.01), curvature=10.0, halfwidth=0.1, nh=100.0)
        assert kernel.shape == KernelShape.MINIMAL_LOSS
        assert design_minimal_variance_kernel(SMOOTH, grid).shape == KernelShape.MINIMAL_VARIANCE


class TestOptimalKernel:
    def test_three_points_give_identity(self):
        kernel = design_optimal_kernel(SMOOTH, [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(kernel.weights, [0.0, 1.0, 0.0], atol=1e-12)

    def test_recovers_epanechnikov_shape(self, grid):
        kernel = design_optimal_kernel(SMOOTH, grid)
        np.testing.assert_allclose(kernel.weights * kernel.nh, 0.75 * (1 - grid ** 2), atol=1e-3)

    def test_recovers_derivative_shape(self, grid):
        kernel = design_optimal_kernel(SLOPE, grid)
        np.testing.assert_allclose(kernel.weights * kernel.nh, 3.75 * (grid - grid ** 3), atol=5e-3)

    def test_vanishes_at_both_ends(self, grid):
        kernel = design_optimal_kernel(SLOPE, grid)
        assert abs(kernel.weights[0]) < 1e-12
        assert abs(kernel.weights[-1]) < 1e-12


class TestLegendreKernel:
    def test_gamma(self):
        assert legendre_gamma(0) == pytest.approx(0.5)
        assert legendre_gamma(1) == pytest.approx(1.5)
        assert legendre_gamma(2) == pytest.approx(7.5)

    def test_continuous_shapes(self):
        s = np.linspace(-1.0, 1.0, 11)
        np.testing.assert_allclose(legendre_shape(0, s), 0.75 * (1 - s ** 2), atol=1e-12)
        np.testing.assert_allclose(legendre_shape(1, s), 3.75 * (s - s ** 3), atol=1e-12)

    def test_q2_shape_has_second_moment_two(self):
        s = np.linspace(-1.0, 1.0, 20001)
        assert np.trapz(legendre_shape(2, s) * s ** 2, s) == pytest.approx(2.0, rel=1e-6)

    def test_discrete_kernel_meets_moments(self):
        kernel = legendre_kernel(KernelOrder.of(2, 4), halfwidth=0.1, grid_count=101)
        assert kernel.moment_residual() < 1e-10

    def test_matches_optimal_design(self, grid):
        legendre = legendre_kernel(SMOOTH, 1.0, grid.size)
        optimal = design_optimal_kernel(SMOOTH, grid)
        np.testing.assert_allclose(legendre.weights, optimal.weights, atol=1e-5)

    def test_needs_gap_of_two(self):
        with pytest.raises(UnsupportedOrderError):
            legendre_kernel(KernelOrder.of(0, 3), 1.0, 101)


class TestBoundaryKernel:
    def test_three_point_left_edge(self):
        times = np.arange(5) * 0.5
        kernel = design_boundary_kernel(SMOOTH, 0.0, 1.0, times)
        np.testing.assert_allclose(kernel.offsets, [0.0, -0.5, -1.0])
        np.testing.assert_allclose(kernel.weights, [1.0, 0.0, 0.0], atol=1e-12)

    def test_edge_moments(self):
        times = np.arange(101) / 100
        kernel = design_boundary_kernel(SMOOTH, 0.0, 1.0, times)
        assert kernel.moment(0) == pytest.approx(1.0, abs=1e-10)
        assert kernel.moment(1) == pytest.approx(0.0, abs=1e-10)

    def test_interior_point_matches_interior_kernel(self):
        times = np.arange(200) / 200
        boundary = design_boundary_kernel(SMOOTH, 0.5, 0.1, times, shape=KernelShape.MINIMAL_VARIANCE)
        interior = design_minimal_variance_kernel(SMOOTH, np.linspace(1.0, -1.0, 41))
        np.testing.assert_allclose(boundary.weights, interior.weights, atol=1e-10)

    def test_window_too_small(self):
        times = np.arange(100) / 100
        with pytest.raises(DesignInfeasibleError):
            design_boundary_kernel(KernelOrder.of(0, 4), 0.0, 0.02, times)


class TestTaperKernel:
    def test_first_taper_values(self):
        np.testing.assert_allclose(sinusoidal_taper(3, 1), [0.5, math.sqrt(0.5), 0.5], atol=1e-12)

    def test_moments_for_any_length(self):
        for length in (5, 16, 63):
            kernel = sinusoidal_taper_kernel(SMOOTH, length)
            assert kernel.moment(0) == pytest.approx(1.0, abs=1e-10)
            assert kernel.moment(1) == pytest.approx(0.0, abs=1e-10)

    def test_end_weights_vanish(self):
        kernel = sinusoidal_taper_kernel(SMOOTH, 33)
        assert abs(kernel.weights[0]) < 1e-9
        assert abs(kernel.weights[-1]) < 1e-9

    def test_sidelobes_below_uniform_kernel(self):
        taper = sinusoidal_taper_kernel(SMOOTH, 64)
        uniform = design_minimal_variance_kernel(SMOOTH, taper.offsets, nh=taper.nh)
        # the uniform kernel has exact nulls on the 2π/64 grid, so compare peak sidelobe levels
        omega = np.linspace(0.25 * np.pi, np.pi, 400)
        ratio = np.max(np.abs(kernel_spectrum(taper, omega))) / np.max(np.abs(kernel_spectrum(uniform, omega)))
        assert 20 * np.log10(ratio) <= -20.0

    def test_too_short(self):
        with pytest.raises(DesignInfeasibleError):
            sinusoidal_taper_kernel(SMOOTH, 2)


class TestKernelQuantities:
    def test_smoothing_constants(self):
        m2, c = kernel_constants(SMOOTH)
        assert m2 == pytest.approx(0.6, rel=1e-3)
        assert c == pytest.approx(0.1, rel=1e-3)

    def test_derivative_constants(self):
        m2, c = kernel_constants(SLOPE)
        assert m2 == pytest.approx(15 / 7, rel=1e-3)
        assert c == pytest.approx(1 / 14, rel=1e-3)

    def test_moments_through_helpers(self, grid):
        kernel = design_optimal_kernel(SLOPE, grid)
        assert kernel_moment(kernel, 1) == pytest.approx(1.0, abs=1e-10)
        assert kernel_moment(kernel, 3) == pytest.approx(6 * kernel.c_qp)
        with pytest.raises(ValueError):
            kernel_moment(kernel, -1)

    def test_single_point_m2(self):
        kernel = Kernel(weights=np.array([1.0]), offsets=np.array([0.0]), order=KernelOrder.of(0, 1),
                        halfwidth=0.01, nh=7.0)
        assert kernel_m2(kernel) == pytest.approx(7.0)

    def test_spectrum_at_zero(self, grid):
        smooth = design_optimal_kernel(SMOOTH, grid)
        slope = design_optimal_kernel(SLOPE, grid)
        assert kernel_spectrum(smooth, 0.0)[0] == pytest.approx(1.0)
        assert abs(kernel_spectrum(slope, 0.0)[0]) < 1e-10

    def test_main_lobe_decreases(self, grid):
        kernel = design_optimal_kernel(SMOOTH, grid)
        omega = np.linspace(0.0, 0.04, 50)
        magnitude = np.abs(kernel_spectrum(kernel, omega))
        assert np.all(np.diff(magnitude) < 0)


class TestWindowKernel:
    def test_cached(self):
        first = design_window_kernel(SMOOTH, KernelShape.OPTIMAL, 10.0, 10, 10, 100.0)
        second = design_window_kernel(SMOOTH, KernelShape.OPTIMAL, 10.0, 10, 10, 100.0)
        assert first is second

    def test_truncated_window_keeps_moments(self):
        kernel = design_window_kernel(SLOPE, KernelShape.OPTIMAL, 10.0, 2, 10, 100.0)
        assert kernel.weights.size == 13
        assert kernel.moment_residual() < 1e-10

    def test_taper_window_rescaled_to_family_halfwidth(self):
        kernel = design_window_kernel(SLOPE, KernelShape.TAPER, 10.5, 10, 10, 100.0)
        assert kernel.moment_residual() < 1e-10
        np.testing.assert_allclose(kernel.lags, np.arange(-10, 11), atol=1e-9)

    def test_minimal_loss_shape_is_not_a_family_shape(self):
        with pytest.raises(ValueError):
            design_window_kernel(SMOOTH, KernelShape.MINIMAL_LOSS, 10.0, 10, 10, 100.0)
        with pytest.raises(ValueError):
            kernel_constants(SMOOTH, KernelShape.MINIMAL_LOSS)
        with pytest.raises(ValueError):
            DesignKernelRequest(output="k.json", method="boundary", sample_count=64, shape="minimal_loss")

    def test_taper_leakage_beyond_guard(self):
        # two lines 0.3π rad/sample apart with a quarter-separation guard band
        leak = 0.75 * 0.3 * np.pi
        optimal = design_window_kernel(SLOPE, KernelShape.OPTIMAL, 164.0, 164, 164, 8192.0)
        taper = design_window_kernel(SLOPE, KernelShape.TAPER, 164.0, 164, 164, 8192.0)
        drop = 20 * np.log10(leakage_envelope(optimal, leak) / leakage_envelope(taper, leak))
        assert drop >= 20.0
