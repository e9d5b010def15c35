"""
Tests for Monte Carlo simulation, tail regression and the prefactor heuristic.
"""

import math

import numpy as np
import pytest
from scipy.stats import norm

from src.catalog.black_scholes import BlackScholesParams
from src.catalog.stein_stein import SteinSteinParams
from src.core.config import McConfig, TailSlopeOptions
from src.core.errors import ContractViolationError, InsufficientDataError
from src.core.flow import flow_forward
from src.core.minimizer import build_candidate
from src.mc.prefactor import fit_prefactor, shape_integral
from src.mc.simulate import block_generator, simulate_terminal
from src.mc.tail_slope import tail_slope
from src.mc.verify import verify_control
from tests.fixtures import ModelFactory


class TestSimulateTerminal:
    """Test Euler-Maruyama terminal samples."""

    def test_black_scholes_mean(self):
        """Test E[Y_T] = y0 - sigma^2 T / 2 within three standard errors."""
        # Arrange
        params = BlackScholesParams(sigma=1.0, T=1.0)
        cfg = McConfig(n_paths=20_000, n_steps=10, seed=7)

        # Act
        samples = simulate_terminal(params, cfg)

        # Assert
        assert samples.shape == (20_000,)
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() + 0.5) < 3.0 * se

    def test_stein_stein_mean_without_drift(self):
        """Test E[Y_T] = -c^2 T^2 / 4 when a, b and sigma0 vanish."""
        params = SteinSteinParams(c=0.8, sigma0=0.0, T=1.0)
        cfg = McConfig(n_paths=40_000, n_steps=50, seed=3)

        samples = simulate_terminal(params, cfg)

        # E[Y_T] = -1/2 int_0^T E[Z_t^2] dt = -c^2 T^2 / 4 up to the Euler bias
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        expected = -(0.8**2) / 4.0 * (1.0 - 1.0 / 50)
        assert abs(samples.mean() - expected) < 4.0 * se

    def test_same_seed_same_samples(self):
        params = SteinSteinParams(b=-0.5, sigma0=0.2, rho=-0.3)
        cfg = McConfig(n_paths=1_000, n_steps=20, seed=11, block_size=256)

        first = simulate_terminal(params, cfg)
        second = simulate_terminal(params, cfg)

        np.testing.assert_array_equal(first, second)

    def test_different_seed_different_samples(self):
        params = BlackScholesParams()

        a = simulate_terminal(params, McConfig(n_paths=100, n_steps=5, seed=1))
        b = simulate_terminal(params, McConfig(n_paths=100, n_steps=5, seed=2))

        assert not np.array_equal(a, b)

    def test_blocks_are_independent_of_path_count(self):
        """Test that adding paths leaves the earlier blocks unchanged."""
        params = BlackScholesParams()
        small = McConfig(n_paths=512, n_steps=5, seed=5, block_size=256)
        large = small.model_copy(update={"n_paths": 1_000})

        np.testing.assert_array_equal(
            simulate_terminal(params, small), simulate_terminal(params, large)[:512]
        )

    def test_workers_do_not_change_samples(self):
        params = BlackScholesParams()
        cfg = McConfig(n_paths=1_024, n_steps=5, seed=9, block_size=256)

        serial = simulate_terminal(params, cfg, n_jobs=1)
        parallel = simulate_terminal(params, cfg, n_jobs=2)

        np.testing.assert_array_equal(serial, parallel)

    def test_antithetic_pairs_cancel(self):
        """Test that mirrored increments make the sample mean exact for a Gaussian law."""
        params = BlackScholesParams(sigma=0.5, T=2.0, y0=0.1)
        cfg = McConfig(n_paths=1_000, n_steps=8, seed=4, antithetic=True, block_size=500)

        samples = simulate_terminal(params, cfg)

        assert samples.mean() == pytest.approx(0.1 - 0.25, abs=1e-12)

    def test_model_spec_noise_level(self):
        model = ModelFactory.brownian()
        cfg = McConfig(n_paths=20_000, n_steps=4, seed=1)

        samples = simulate_terminal(model, cfg, T=1.0, eps=0.5)

        assert samples.var(ddof=1) == pytest.approx(0.25, rel=0.05)

    def test_model_spec_without_noise(self):
        model = ModelFactory.ornstein_uhlenbeck(kappa=1.0).with_fields(x0=np.array([1.0]))
        cfg = McConfig(n_paths=10, n_steps=1_000, seed=1)

        samples = simulate_terminal(model, cfg, T=1.0, eps=0.0)

        np.testing.assert_allclose(samples, math.exp(-1.0), rtol=1e-3)

    def test_euler_error_halves_with_the_step(self):
        """Test first-order convergence on the noise-free OU flow."""
        model = ModelFactory.ornstein_uhlenbeck(kappa=1.0).with_fields(x0=np.array([1.0]))
        errors = []
        for n_steps in (50, 100, 200):
            cfg = McConfig(n_paths=2, n_steps=n_steps, seed=1)
            samples = simulate_terminal(model, cfg, T=1.0, eps=0.0)
            errors.append(abs(samples[0] - math.exp(-1.0)))

        np.testing.assert_allclose(
            [errors[0] / errors[1], errors[1] / errors[2]], 2.0, rtol=0.05
        )

    @pytest.mark.parametrize("n_steps", [4, 8, 16])
    def test_stein_stein_mean_bias_is_first_order(self, n_steps):
        """Test E[Y_T] - exact = c^2 T^2 / (4 N) for the Euler scheme."""
        params = SteinSteinParams(c=1.0, sigma0=0.3, T=1.0)
        cfg = McConfig(n_paths=400_000, n_steps=n_steps, seed=17)

        samples = simulate_terminal(params, cfg)

        exact = -0.5 * 0.3**2 - 0.25
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - exact - 0.25 / n_steps) < 4.0 * se

    def test_projection_keeps_l_columns(self):
        model = ModelFactory.brownian(dim=2, dim_proj=2)

        samples = simulate_terminal(model, McConfig(n_paths=10, n_steps=2), T=1.0)

        assert samples.shape == (10, 2)

    def test_per_row_model_matches_polynomial(self):
        cfg = McConfig(n_paths=50, n_steps=10, seed=2)

        poly = simulate_terminal(ModelFactory.ornstein_uhlenbeck(), cfg, T=1.0, eps=0.3)
        plain = simulate_terminal(ModelFactory.callable_ou(), cfg, T=1.0, eps=0.3)

        np.testing.assert_allclose(plain, poly, rtol=1e-12)

    @pytest.mark.parametrize("kwargs", [{}, {"T": 0.0}, {"T": 1.0, "eps": -0.1}])
    def test_rejects_bad_arguments(self, kwargs):
        with pytest.raises(ContractViolationError):
            simulate_terminal(ModelFactory.brownian(), McConfig(n_paths=2), **kwargs)

    def test_block_generators_differ(self):
        a = block_generator(0, 0).standard_normal(4)
        b = block_generator(0, 1).standard_normal(4)

        assert not np.array_equal(a, b)

    def test_config_rejects_odd_blocks(self):
        with pytest.raises(ValueError, match="even"):
            McConfig(block_size=3)


class TestTailSlope:
    """Test the empirical tail regression."""

    def test_exponential_tail(self, rng):
        """Test slope -2 for survival exp(-2y) regressed on y."""
        samples = rng.exponential(scale=0.5, size=200_000)

        estimate = tail_slope(samples, TailSlopeOptions(theta=2))

        assert abs(estimate.slope + 2.0) < max(3.0 * estimate.standard_error, 0.1)
        assert estimate.n_samples == 200_000
        assert estimate.n_tail_points >= 100
        assert estimate.standard_error > 0

    def test_standard_error_is_calibrated(self):
        """Test that slope +- 1.96 SE covers -c1 in about 95% of seeded trials."""
        c1 = 2.0
        covered = 0
        for trial in range(100):
            samples = np.random.default_rng(trial).exponential(scale=1.0 / c1, size=100_000)
            opts = TailSlopeOptions(theta=2, n_bootstrap=100, bootstrap_seed=trial)

            estimate = tail_slope(samples, opts)

            covered += int(abs(estimate.slope + c1) <= 1.96 * estimate.standard_error)

        assert 85 <= covered <= 99

    def test_gaussian_tail_with_prefactor_correction(self, rng):
        """Test c1 = 1/2 for a standard normal regressed on y^2."""
        samples = rng.standard_normal(1_000_000)

        estimate = tail_slope(
            samples, TailSlopeOptions(theta=1, prefactor_correction=True, n_bootstrap=50)
        )

        assert estimate.c1_estimate == pytest.approx(0.5, abs=0.05)
        assert estimate.theta == 1

    def test_bootstrap_is_seeded(self, rng):
        samples = rng.exponential(size=100_000)
        opts = TailSlopeOptions(n_bootstrap=20, bootstrap_seed=3)

        assert tail_slope(samples, opts) == tail_slope(samples, opts)

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError, match="at least"):
            tail_slope(np.ones(10))

    def test_no_positive_tail(self, rng):
        samples = -rng.exponential(size=100_000)

        with pytest.raises(InsufficientDataError) as excinfo:
            tail_slope(samples)

        assert excinfo.value.details["n_tail_points"] == 0

    def test_window_validation(self):
        with pytest.raises(ValueError, match="quantile_range"):
            TailSlopeOptions(quantile_range=(0.999, 0.99))

    def test_to_dict(self, rng):
        estimate = tail_slope(rng.exponential(size=100_000), TailSlopeOptions(n_bootstrap=5))

        payload = estimate.to_dict()

        assert payload["c1_estimate"] == -payload["slope"]
        assert payload["quantile_range"] == [0.995, 0.99995]


class TestPrefactor:
    """Test the prefactor heuristic."""

    def test_gaussian_normalization(self, rng):
        """Test c0 = 1/sqrt(2 pi) for a standard normal with c1 = 1/2, c2 = 0."""
        samples = rng.standard_normal(1_000_000)

        estimate = fit_prefactor(samples, 0.5, 0.0, 1)

        assert estimate.c0_estimate == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=0.05)
        assert estimate.n_points <= 200
        assert "heuristic" in estimate.to_dict()["note"]

    def test_shape_integral_gaussian(self):
        """Test the scaled integral against the Mills ratio."""
        y = 3.0

        scaled = shape_integral(y, 0.5, 0.0, 1)

        expected = math.sqrt(2.0 * math.pi) * norm.sf(y) * math.exp(y**2 / 2.0)
        assert scaled == pytest.approx(expected, rel=1e-8)

    @pytest.mark.parametrize("c1, theta", [(0.0, 1), (1.0, 3)])
    def test_rejects_bad_inputs(self, c1, theta):
        with pytest.raises(ContractViolationError):
            fit_prefactor(np.ones(10), c1, 0.0, theta)

    def test_no_positive_points(self):
        with pytest.raises(InsufficientDataError):
            fit_prefactor(-np.ones(100), 1.0, 0.0, 2)


class TestVerifyControl:
    """Test the admissibility oracle."""

    def test_zero_control_misses_by_target(self):
        """Test that a zero control on driftless noise misses by |a|."""
        model = ModelFactory.brownian()
        flow = flow_forward(model, [0.0], [0.0], 1.0)
        candidate = build_candidate(model, flow, np.array([0.7]))

        assert verify_control(model, candidate) == pytest.approx(0.7, abs=1e-12)

    def test_minimizing_control_hits(self):
        model = ModelFactory.black_scholes(sigma=0.5)
        flow = flow_forward(model, [0.0], [4.0], 1.0)
        candidate = build_candidate(model, flow, np.array([1.0]))

        assert verify_control(model, candidate) <= 1e-8
