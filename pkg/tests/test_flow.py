import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.catalog.stein_stein import (
    SteinSteinParams,
    flow_closed_form,
    solve_correlated,
    stein_stein_model,
)
from src.core.config import IntegratorOptions
from src.core.errors import ContractViolationError
from src.core.flow import FlowDirection, flow_backward, flow_forward, flow_with_variation
from tests.fixtures import ModelFactory


@pytest.fixture()
def stein_stein():
    params = SteinSteinParams(b=-0.5, c=1.2, rho=-0.3)
    solution = solve_correlated(params, n_branches=1)
    return params, stein_stein_model(params), np.array([solution.p_plus, solution.q0_plus])


class TestFlowForward:
    """Test forward Hamiltonian flows."""

    def test_black_scholes_is_linear(self):
        """Test x_T = x0 + T sigma^2 p with constant momentum."""
        model = ModelFactory.black_scholes(sigma=0.6)

        flow = flow_forward(model, [0.2], [1.5], 2.0)

        assert flow.x_terminal[0] == pytest.approx(0.2 + 2.0 * 0.36 * 1.5, rel=1e-10)
        np.testing.assert_allclose(flow.momenta, 1.5)
        assert flow.direction is FlowDirection.FORWARD

    def test_reporting_grid(self):
        opts = IntegratorOptions(n_report=11)

        flow = flow_forward(ModelFactory.ornstein_uhlenbeck(), [0.0], [1.0], 0.5, opts)

        np.testing.assert_allclose(flow.times, np.linspace(0.0, 0.5, 11))
        assert flow.positions.shape == (11, 1)
        assert flow.maturity == pytest.approx(0.5)

    def test_ou_matches_closed_form(self):
        """Test x_t = sigma^2 p0 sinh(kappa t) / kappa from the origin."""
        kappa, sigma, p0 = 0.8, 0.5, 1.3
        model = ModelFactory.ornstein_uhlenbeck(kappa=kappa, sigma=sigma)

        flow = flow_forward(model, [0.0], [p0], 1.0)

        expected = sigma**2 * p0 * np.sinh(kappa * flow.times) / kappa
        np.testing.assert_allclose(flow.positions[:, 0], expected, atol=1e-9)
        np.testing.assert_allclose(flow.momenta[:, 0], p0 * np.exp(kappa * flow.times), rtol=1e-9)

    def test_stein_stein_matches_closed_form(self, stein_stein):
        """Test the numerical flow against the explicit trajectory."""
        params, model, p0 = stein_stein

        flow = flow_forward(model, model.x0, p0, params.T)

        y, z, q = flow_closed_form(params, p0[0], p0[1], flow.times)
        np.testing.assert_allclose(flow.positions[:, 0], y, atol=1e-8)
        np.testing.assert_allclose(flow.positions[:, 1], z, atol=1e-8)
        np.testing.assert_allclose(flow.momenta[:, 1], q, atol=1e-8)
        assert flow.x_terminal[0] == pytest.approx(1.0, abs=1e-8)
        assert flow.p_terminal[1] == pytest.approx(0.0, abs=1e-8)

    def test_hamiltonian_is_conserved(self, stein_stein):
        params, model, p0 = stein_stein

        flow = flow_forward(model, model.x0, p0, params.T)

        assert flow.hamiltonian_drift <= 1e-8 * (1.0 + abs(flow.hamiltonian_value))

    @settings(max_examples=20, deadline=None)
    @given(p=st.floats(-3.0, 3.0), x=st.floats(-1.0, 1.0))
    def test_conservation_for_random_starts(self, p, x):
        model = ModelFactory.ornstein_uhlenbeck(kappa=0.4, sigma=0.7)

        flow = flow_forward(model, [x], [p], 1.0)

        assert flow.hamiltonian_drift <= 1e-8 * (1.0 + abs(flow.hamiltonian_value))

    @pytest.mark.parametrize("T", [0.0, -1.0])
    def test_rejects_nonpositive_maturity(self, T):
        with pytest.raises(ContractViolationError):
            flow_forward(ModelFactory.black_scholes(), [0.0], [1.0], T)

    def test_rejects_non_finite_start(self):
        with pytest.raises(ContractViolationError, match="finite"):
            flow_forward(ModelFactory.black_scholes(), [np.nan], [1.0], 1.0)


class TestVariationalFlow:
    """Test the variational matrix and the backward flow."""

    def test_zero_maturity_is_identity(self, stein_stein):
        _, model, p0 = stein_stein

        flow = flow_with_variation(model, model.x0, p0, 0.0)

        np.testing.assert_array_equal(flow.variational, np.eye(4))

    def test_variational_matrix_is_symplectic(self, stein_stein):
        """Test det = 1 and M^T J M = J."""
        # Arrange
        params, model, p0 = stein_stein
        j = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])

        # Act
        flow = flow_with_variation(model, model.x0, p0, params.T)
        m = flow.variational

        # Assert
        assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(m.T @ j @ m, j, atol=1e-6)

    def test_variational_matches_differences(self):
        model = ModelFactory.ornstein_uhlenbeck(kappa=0.8, sigma=0.5)
        h = 1e-6

        flow = flow_with_variation(model, [0.1], [0.7], 1.0)

        up = flow_forward(model, [0.1], [0.7 + h], 1.0)
        down = flow_forward(model, [0.1], [0.7 - h], 1.0)
        dx_dp = (up.x_terminal[0] - down.x_terminal[0]) / (2 * h)
        assert flow.variational[0, 1] == pytest.approx(dx_dp, rel=1e-6)

    def test_backward_inverts_forward(self, stein_stein):
        """Test that flowing back from the terminal state recovers the start."""
        params, model, p0 = stein_stein
        forward = flow_forward(model, model.x0, p0, params.T)

        backward = flow_backward(
            model, forward.x_terminal, forward.p_terminal, params.T, with_variation=True
        )

        np.testing.assert_allclose(backward.x_initial, model.x0, atol=1e-8)
        np.testing.assert_allclose(backward.p_initial, p0, atol=1e-8)
        np.testing.assert_allclose(backward.times, forward.times, atol=1e-12)
        assert backward.direction is FlowDirection.BACKWARD

    def test_backward_variation_inverts_forward_variation(self, stein_stein):
        params, model, p0 = stein_stein
        forward = flow_with_variation(model, model.x0, p0, params.T)

        backward = flow_backward(
            model, forward.x_terminal, forward.p_terminal, params.T, with_variation=True
        )

        np.testing.assert_allclose(backward.variational @ forward.variational, np.eye(4), atol=1e-6)
