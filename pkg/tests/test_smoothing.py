"""
Unit tests for kernel smoothing and the bias/variance/halfwidth formulas
"""

import math
import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ifkernel.core.errors import InsufficientDataError
from ifkernel.schemas.kernel import KernelOrder, KernelShape
from ifkernel.schemas.noise import Spectral, StationaryLag, White
from ifkernel.schemas.requests import BenchmarkScenario
from ifkernel.schemas.signal import SampledSignal
from ifkernel.services.benchmark import run_benchmark
from ifkernel.services.kernel_design import design_optimal_kernel, legendre_kernel
from ifkernel.services.smoothing import (
    KernelFamily,
    estimate_noise_variance,
    expected_loss,
    halfwidth_bounds,
    minimal_loss_value,
    optimal_halfwidth,
    predicted_bias,
    predicted_variance,
    smooth_at,
    smooth_series,
    smooth_varying,
    window_constants,
)

SMOOTH = KernelOrder.of(0, 2)
SLOPE = KernelOrder.of(1, 3)


@pytest.fixture
def grid_signal():
    def build(function, n=200):
        times = np.arange(n) / n
        return SampledSignal(times=times, values=function(times))
    return build


@pytest.fixture
def epanechnikov():
    return legendre_kernel(SMOOTH, 0.05, 2001)


class TestSmoothAt:
    def test_constant_signal(self, grid_signal):
        signal = grid_signal(lambda t: np.full_like(t, 5.0))
        family = KernelFamily(SMOOTH, 0.1)
        assert smooth_at(signal, family, 0.5) == pytest.approx(5.0)
        assert smooth_at(signal, family, 0.0) == pytest.approx(5.0)

    def test_derivative_of_square(self, grid_signal):
        signal = grid_signal(lambda t: t ** 2)
        assert smooth_at(signal, KernelFamily(SLOPE, 0.1), 0.5) == pytest.approx(1.0, abs=1e-9)

    def test_cubic_bias_matches_leading_term(self, grid_signal):
        signal = grid_signal(lambda t: t ** 3, n=1000)
        family = KernelFamily(SMOOTH, 0.1)
        kernel = family.kernel_at(signal, 0.5)
        expected = 0.125 + kernel.c_qp * 3.0 * 0.01
        assert smooth_at(signal, family, 0.5) == pytest.approx(expected, abs=1e-10)
        assert smooth_at(signal, family, 0.5) == pytest.approx(0.128, abs=1e-4)

    def test_off_grid_point_uses_boundary_design(self, grid_signal):
        signal = grid_signal(lambda t: 3 * t - 1)
        assert smooth_at(signal, KernelFamily(SMOOTH, 0.05), 0.4321) == pytest.approx(3 * 0.4321 - 1, abs=1e-9)

    def test_explicit_kernel(self, grid_signal):
        signal = grid_signal(lambda t: 2 * t)
        family = KernelFamily(SMOOTH, 0.05)
        kernel = family.kernel_at(signal, 0.5)
        assert smooth_at(signal, kernel, 0.5) == pytest.approx(1.0, abs=1e-10)

    def test_no_samples_in_window(self, grid_signal):
        signal = grid_signal(lambda t: t)
        with pytest.raises(InsufficientDataError):
            smooth_at(signal, KernelFamily(SMOOTH, 0.05), 3.0)


class TestSmoothSeries:
    def test_linear_signal_reproduced_everywhere(self, grid_signal):
        signal = grid_signal(lambda t: 2 * t)
        estimate = smooth_series(signal, KernelFamily(SMOOTH, 0.07))
        np.testing.assert_allclose(estimate, 2 * signal.times, atol=1e-10)

    def test_constant_signal_at_boundaries(self, grid_signal):
        signal = grid_signal(lambda t: np.full_like(t, -1.5))
        for shape in KernelShape:
            estimate = smooth_series(signal, KernelFamily(SMOOTH, 0.1, shape))
            np.testing.assert_allclose(estimate, -1.5, atol=1e-10)

    def test_derivative_series(self, grid_signal):
        signal = grid_signal(lambda t: t ** 2 - t)
        estimate = smooth_series(signal, KernelFamily(SLOPE, 0.08))
        np.testing.assert_allclose(estimate, 2 * signal.times - 1, atol=1e-8)

    def test_empty_evaluation_times(self, grid_signal):
        signal = grid_signal(np.sin)
        assert smooth_series(signal, KernelFamily(SMOOTH, 0.1), []).size == 0

    def test_off_grid_evaluation_matches_pointwise(self, grid_signal):
        signal = grid_signal(lambda t: np.sin(2 * np.pi * t))
        family = KernelFamily(SMOOTH, 0.1)
        times = [0.1234, 0.5, 0.987]
        expected = [smooth_at(signal, family, t) for t in times]
        np.testing.assert_allclose(smooth_series(signal, family, times), expected)

    def test_complex_values(self, grid_signal):
        signal = grid_signal(lambda t: np.exp(1j * t))
        estimate = smooth_series(signal, KernelFamily(SMOOTH, 0.05))
        assert np.iscomplexobj(estimate)
        np.testing.assert_allclose(estimate[50:150], signal.values[50:150], atol=1e-3)

    def test_window_too_small(self, grid_signal):
        signal = grid_signal(lambda t: t)
        with pytest.raises(InsufficientDataError):
            smooth_series(signal, KernelFamily(KernelOrder.of(0, 4), 0.004))

    def test_nonpositive_halfwidth(self):
        with pytest.raises(ValueError):
            KernelFamily(SMOOTH, 0.0)


class TestSmoothVarying:
    def test_constant_halfwidths_match_fixed_family(self, grid_signal):
        signal = grid_signal(lambda t: np.cos(3 * t))
        varying = smooth_varying(signal, SMOOTH, np.full(signal.sample_count, 0.05))
        fixed = smooth_series(signal, KernelFamily(SMOOTH, 0.05))
        np.testing.assert_allclose(varying, fixed, atol=1e-12)

    def test_polynomial_exact_with_any_halfwidths(self, grid_signal):
        signal = grid_signal(lambda t: 4 * t - 2)
        halfwidths = np.linspace(0.02, 0.2, signal.sample_count)
        np.testing.assert_allclose(smooth_varying(signal, SMOOTH, halfwidths), signal.values, atol=1e-9)

    def test_one_halfwidth_per_sample(self, grid_signal):
        signal = grid_signal(lambda t: t)
        with pytest.raises(ValueError):
            smooth_varying(signal, SMOOTH, [0.1, 0.2])


class TestPredictedVariance:
    def test_zero_noise(self, epanechnikov):
        assert predicted_variance(epanechnikov, White(sigma2=0.0), 1000, 0.05) == 0.0

    def test_white_example(self, epanechnikov):
        assert predicted_variance(epanechnikov, White(sigma2=0.01), 1000, 0.05) == pytest.approx(1.2e-4, rel=1e-3)

    def test_identity_lag_model_matches_white(self):
        kernel = design_optimal_kernel(SMOOTH, np.linspace(-1.0, 1.0, 51), halfwidth=0.05, nh=25.0)
        white = predicted_variance(kernel, White(sigma2=0.01), 500, 0.05)
        lagged = predicted_variance(kernel, StationaryLag(sigma2=0.01, correlation=[1.0]), 500, 0.05)
        assert lagged == pytest.approx(white, rel=1e-12)

    def test_flat_spectrum_matches_white(self):
        kernel = design_optimal_kernel(SMOOTH, np.linspace(-1.0, 1.0, 51), halfwidth=0.05, nh=25.0)
        flat = Spectral(frequencies=[0.0, np.pi], values=[0.01, 0.01])
        white = predicted_variance(kernel, White(sigma2=0.01), 500, 0.05)
        assert predicted_variance(kernel, flat, 500, 0.05) == pytest.approx(white, rel=1e-12)
        assert predicted_variance(kernel, flat, 500, 0.05, exact=True) == pytest.approx(white, rel=1e-3)


class TestPredictedBias:
    def test_zero_derivative(self, epanechnikov):
        assert predicted_bias(epanechnikov, 0.0, 0.1) == 0.0

    def test_quadratic_example(self, epanechnikov):
        assert predicted_bias(epanechnikov, 2.0, 0.1) == pytest.approx(2e-3, rel=1e-3)

    def test_cubic_derivative_example(self):
        kernel = legendre_kernel(SLOPE, 0.1, 2001)
        assert predicted_bias(kernel, 6.0, 0.1) == pytest.approx(6 * 0.01 / 14, rel=1e-3)

    def test_quadratic_bias_is_exact(self, grid_signal):
        signal = grid_signal(lambda t: t ** 2, n=1000)
        family = KernelFamily(SMOOTH, 0.1)
        kernel = family.kernel_at(signal, 0.5)
        error = smooth_at(signal, family, 0.5) - 0.25
        assert error == pytest.approx(predicted_bias(kernel, 2.0, 0.1), rel=1e-9)


class TestLossAndHalfwidth:
    def test_noise_free_loss_is_bias_only(self, epanechnikov):
        report = expected_loss(epanechnikov, White(sigma2=0.0), 2.0, 1000, 0.1)
        assert report.variance == 0.0
        assert report.total == pytest.approx(report.bias_squared)

    def test_variance_only_loss_decreases_in_h(self, epanechnikov):
        totals = [expected_loss(epanechnikov, White(sigma2=0.01), 0.0, 1000, h).total for h in (0.02, 0.05, 0.1)]
        assert totals[0] > totals[1] > totals[2]

    def test_optimal_halfwidth_example(self):
        selection = optimal_halfwidth(SMOOTH, White(sigma2=0.01), 4 * math.pi ** 2, 1000, 0.6, 0.1)
        assert selection.halfwidth == pytest.approx(0.0395, abs=5e-4)
        assert not selection.clipped

    def test_scaling_with_noise_and_length(self):
        base = optimal_halfwidth(SMOOTH, White(sigma2=0.01), 10.0, 1000, 0.6, 0.1).unclipped
        noisier = optimal_halfwidth(SMOOTH, White(sigma2=0.02), 10.0, 1000, 0.6, 0.1).unclipped
        longer = optimal_halfwidth(SMOOTH, White(sigma2=0.01), 10.0, 32000, 0.6, 0.1).unclipped
        assert noisier / base == pytest.approx(2 ** 0.2)
        assert longer / base == pytest.approx(32 ** -0.2)

    def test_stationary_at_optimum(self, epanechnikov):
        noise = White(sigma2=0.01)
        g2 = 4 * math.pi ** 2
        h = optimal_halfwidth(SMOOTH, noise, g2, 1000, epanechnikov.m2, epanechnikov.c_qp).halfwidth
        below = expected_loss(epanechnikov, noise, g2, 1000, h - 1e-5).total
        above = expected_loss(epanechnikov, noise, g2, 1000, h + 1e-5).total
        at = expected_loss(epanechnikov, noise, g2, 1000, h).total
        assert abs(above - below) / 2e-5 < 1e-6 * at / h
        assert at <= min(above, below)

    def test_minimal_loss_matches_loss_at_optimum(self, epanechnikov):
        noise = White(sigma2=0.01)
        m2, c = epanechnikov.m2, epanechnikov.c_qp
        h = optimal_halfwidth(SMOOTH, noise, 20.0, 1000, m2, c).halfwidth
        report = expected_loss(epanechnikov, noise, 20.0, 1000, h)
        assert minimal_loss_value(SMOOTH, noise, 20.0, 1000, m2, c) == pytest.approx(report.total, rel=1e-10)

    def test_minimal_loss_scaling(self):
        short = minimal_loss_value(SLOPE, White(sigma2=0.01), 5.0, 1000, 15 / 7, 1 / 14)
        long = minimal_loss_value(SLOPE, White(sigma2=0.01), 5.0, 128000, 15 / 7, 1 / 14)
        assert long / short == pytest.approx(128 ** (-4 / 7))

    def test_degenerate_curvature_returns_upper_bound(self):
        selection = optimal_halfwidth(SMOOTH, White(sigma2=0.01), 0.0, 1000, 0.6, 0.1)
        assert selection.degenerate
        assert selection.halfwidth == halfwidth_bounds(SMOOTH, 1000)[1]

    def test_clipped_to_lower_bound(self):
        selection = optimal_halfwidth(SMOOTH, White(sigma2=1e-12), 1e6, 100, 0.6, 0.1)
        assert selection.clipped
        assert selection.halfwidth == pytest.approx(3 / 100)


class TestNoiseVariance:
    def test_white_noise_estimate(self):
        rng = np.random.default_rng(3)
        values = np.sin(np.linspace(0, 2, 20000)) + 0.3 * rng.standard_normal(20000)
        assert estimate_noise_variance(values) == pytest.approx(0.09, rel=0.05)

    def test_needs_two_samples(self):
        with pytest.raises(InsufficientDataError):
            estimate_noise_variance([1.0])


class TestWindowConstants:
    def test_interior_and_boundary_kernels(self, grid_signal):
        signal = grid_signal(np.sin)
        m2, c_qp = window_constants(signal, SMOOTH, 0.1)
        family = KernelFamily(SMOOTH, 0.1)
        for index in (0, 5, 100, 199):
            kernel = family.window_kernel(signal, index)
            assert m2[index] == pytest.approx(kernel.m2)
            assert c_qp[index] == pytest.approx(kernel.c_qp)
        # reach is floor(0.1 * 200) = 20 samples
        np.testing.assert_allclose(m2[20:-20], m2[100], rtol=1e-12)
        assert m2[0] > m2[100]

    def test_varying_halfwidths_follow_smooth_varying(self, grid_signal):
        signal = grid_signal(np.sin)
        halfwidths = np.linspace(0.05, 0.15, 200)
        m2, _ = window_constants(signal, SMOOTH, halfwidths, varying=True)
        fixed, _ = window_constants(signal, SMOOTH, 0.1)
        assert m2.shape == (200,)
        assert np.all(m2 > 0)
        assert m2[100] == pytest.approx(fixed[100], rel=0.05)

    def test_rejects_minimal_loss_shape(self, grid_signal):
        with pytest.raises(ValueError):
            window_constants(grid_signal(np.sin), SMOOTH, 0.1, KernelShape.MINIMAL_LOSS)


@pytest.mark.slow
class TestVarianceLaw:
    @pytest.mark.parametrize("order", [SMOOTH, SLOPE])
    @pytest.mark.parametrize("halfwidth", [0.02, 0.05, 0.1])
    def test_monte_carlo_variance(self, order, halfwidth):
        n, replications, sigma2 = 1000, 2000, 0.04
        family = KernelFamily(order, halfwidth)
        rng = np.random.default_rng(int(halfwidth * 1000) + 10 * order.q)
        draws = np.array([
            smooth_at(SampledSignal.on_unit_grid(math.sqrt(sigma2) * rng.standard_normal(n)), family, 0.5)
            for _ in range(replications)
        ])
        kernel = family.window_kernel(SampledSignal.on_unit_grid(np.zeros(n)), n // 2)
        predicted = predicted_variance(kernel, White(sigma2=sigma2), n, halfwidth)
        standard_error = predicted * math.sqrt(2 / (replications - 1))
        assert abs(np.var(draws, ddof=1) - predicted) < 3 * standard_error


@pytest.mark.slow
class TestHalfwidthScaling:
    def test_best_halfwidth_slope(self):
        scenario = BenchmarkScenario(name="h_scaling", kind="smoothing", sample_counts=[250, 500, 1000, 2000, 4000],
                                     snr_db=[20.0], replications=20, seed=23,
                                     halfwidths=np.geomspace(0.01, 0.15, 40).tolist())
        report = run_benchmark(scenario, jobs=1)
        assert report["slopes"]["20dB"]["best_halfwidth"] == pytest.approx(-1 / 5, abs=0.15)
