import numpy as np
import pytest

from src.catalog.black_scholes import BlackScholesParams, tail_problem
from src.catalog.stein_stein import SteinSteinParams, solve_correlated
from src.core.config import IntegratorOptions, ShootingOptions
from src.core.errors import ContractViolationError, NoConvergenceError, SingularJacobianError
from src.core.shooting import BvpProblem, enumerate_solutions, shoot, start_lattice
from tests.fixtures import (
    ModelFactory,
    stein_stein_momenta,
    stein_stein_problem,
    stein_stein_settings,
)


class TestBvpProblem:
    """Test boundary problem validation."""

    def test_defaults_start_to_model(self):
        problem = tail_problem(BlackScholesParams())

        np.testing.assert_array_equal(problem.x0, [0.0])
        assert problem.dim == 1

    @pytest.mark.parametrize("T", [0.0, -0.5, np.inf])
    def test_rejects_bad_maturity(self, T):
        with pytest.raises(ContractViolationError, match="Maturity"):
            BvpProblem(model=ModelFactory.black_scholes(), target=np.array([1.0]), T=T)

    def test_rejects_wrong_target_length(self):
        with pytest.raises(ContractViolationError, match="Target"):
            BvpProblem(model=ModelFactory.brownian(dim=2), target=np.array([1.0, 2.0]), T=1.0)

    def test_with_target(self):
        problem = tail_problem(BlackScholesParams())

        moved = problem.with_target([2.5])

        np.testing.assert_array_equal(moved.target, [2.5])
        assert moved.T == problem.T


class TestShoot:
    """Test damped Newton shooting."""

    def test_black_scholes_converges(self):
        """Test p0 = a / (sigma^2 T) for the driftless limit."""
        problem = tail_problem(BlackScholesParams(sigma=0.5, T=2.0), target=1.5)

        solution = shoot(problem, [0.0])

        assert solution.p0[0] == pytest.approx(1.5 / (0.25 * 2.0), rel=1e-9)
        assert solution.residual_norm <= 1e-9
        assert solution.newton_iterations <= 2

    def test_stein_stein_matches_closed_form(self):
        params = SteinSteinParams(b=-0.3, c=0.8)
        expected = stein_stein_momenta(params)[0]

        solution = shoot(stein_stein_problem(params), [2.5, 2.0])

        np.testing.assert_allclose(solution.p0, expected, rtol=1e-7)
        assert solution.flow.x_terminal[0] == pytest.approx(1.0, abs=1e-9)

    def test_negative_branch_from_mirrored_guess(self):
        params = SteinSteinParams()

        solution = shoot(stein_stein_problem(params), [2.5, -1.0])

        np.testing.assert_allclose(solution.p0, stein_stein_momenta(params)[1], rtol=1e-6)

    def test_refined_integrator_keeps_residual(self):
        """Test that tighter integrator tolerances move neither residual nor root."""
        problem = stein_stein_problem(SteinSteinParams(b=-0.5, rho=-0.3))
        default = shoot(problem, [2.5, 1.0])

        refined = shoot(problem, default.p0, integrator=IntegratorOptions().refined())

        assert refined.residual_norm <= ShootingOptions().tol_bvp
        np.testing.assert_allclose(refined.p0, default.p0, rtol=1e-8)
        assert refined.newton_iterations <= 2

    def test_rejects_bad_guess(self):
        problem = tail_problem(BlackScholesParams())

        with pytest.raises(ContractViolationError, match="Guess"):
            shoot(problem, [np.nan])

    def test_singular_jacobian(self):
        """Test that p = 0 for Stein-Stein leaves z untouched and q unreachable."""
        problem = stein_stein_problem(SteinSteinParams())

        with pytest.raises(SingularJacobianError):
            shoot(problem, [0.0, 0.0])

    def test_iteration_cap(self):
        opts = ShootingOptions(max_iterations=1, tol_bvp=1e-14)

        with pytest.raises(NoConvergenceError) as excinfo:
            shoot(stein_stein_problem(SteinSteinParams()), [2.8, 2.2], opts)

        assert excinfo.value.details["iterations"] <= 1


class TestEnumeration:
    """Test multi-start enumeration."""

    def test_lattice_size_and_box(self):
        opts = ShootingOptions(lattice_k=2, box_half_width=4.0)

        starts = start_lattice(2, 2.0, opts)

        assert starts.shape == (8, 2)
        assert np.all(np.abs(starts) <= 2.0)
        assert not np.any(np.all(starts == 0.0, axis=1))

    def test_lattice_is_deterministic(self):
        opts = ShootingOptions(lattice_k=3)

        np.testing.assert_array_equal(start_lattice(2, 1.0, opts), start_lattice(2, 1.0, opts))

    def test_lattice_half_width_override(self):
        starts = start_lattice(1, 1.0, ShootingOptions(lattice_k=1), half_width=0.1)

        np.testing.assert_allclose(sorted(starts[:, 0]), [-0.05, 0.05])

    def test_black_scholes_has_one_solution(self):
        problem = tail_problem(BlackScholesParams())
        opts = ShootingOptions(lattice_k=2, box_half_width=3.0, n_jobs=1)

        enumeration = enumerate_solutions(problem, opts)

        assert len(enumeration) == 1
        assert enumeration[0].energy == pytest.approx(0.5, rel=1e-8)
        assert enumeration.n_starts == 4
        assert enumeration.diagnostics["box_growths"] == 0

    def test_stein_stein_symmetric_pair_without_seeds(self):
        """Test that both signs of q0 are found from the lattice alone."""
        # Arrange
        params = SteinSteinParams()
        settings = stein_stein_settings()

        # Act
        enumeration = enumerate_solutions(
            stein_stein_problem(params), settings.shooting, settings.integrator
        )

        # Assert
        assert settings.shooting.seeds == []
        lowest = enumeration[0].energy
        pair = [s for s in enumeration if s.energy == pytest.approx(lowest, rel=1e-6)]
        assert len(pair) == 2
        expected = stein_stein_momenta(params)
        assert sorted(s.p0[1] for s in pair) == pytest.approx(
            sorted(m[1] for m in expected), rel=1e-6
        )
        assert lowest == pytest.approx(solve_correlated(params).c1, rel=1e-6)
        energies = [s.energy for s in enumeration]
        assert energies == sorted(energies)

    def test_higher_branches_in_wider_box(self):
        """Test that a wider box reaches branches k >= 2, ordered by energy."""
        params = SteinSteinParams()
        opts = ShootingOptions(lattice_k=16, box_half_width=12.0, n_jobs=1)

        enumeration = enumerate_solutions(stein_stein_problem(params), opts)

        energies = [s.energy for s in enumeration]
        assert energies == sorted(energies)
        branch_p = [p for _, p in solve_correlated(params, n_branches=2).branch_roots]
        found_p = [s.p0[0] for s in enumeration]
        for p in branch_p:
            assert any(f == pytest.approx(p, rel=1e-6) for f in found_p)
        # energy = p * target on every branch
        for s in enumeration:
            assert s.energy == pytest.approx(s.p0[0], rel=1e-6)

    def test_box_grows_until_a_start_converges(self):
        """Test steps capped at the box width, so only a grown box reaches p0 = 1."""
        problem = tail_problem(BlackScholesParams())
        opts = ShootingOptions(lattice_k=1, box_half_width=0.1, n_jobs=1)

        enumeration = enumerate_solutions(problem, opts)

        assert len(enumeration) == 1
        assert enumeration[0].p0[0] == pytest.approx(1.0, rel=1e-9)
        assert enumeration.diagnostics["box_growths"] == 2
        assert enumeration.box_half_width == pytest.approx(0.4)
        assert enumeration.n_starts == 6
        assert enumeration.n_failed == 4

    def test_no_growth_allowed(self):
        problem = tail_problem(BlackScholesParams())
        opts = ShootingOptions(lattice_k=1, box_half_width=0.1, max_box_growths=0, n_jobs=1)

        enumeration = enumerate_solutions(problem, opts)

        assert len(enumeration) == 0
        assert enumeration.n_failed == enumeration.n_starts == 2

    def test_user_seed_avoids_growth(self):
        problem = tail_problem(BlackScholesParams())
        opts = ShootingOptions(lattice_k=1, box_half_width=0.1, seeds=[[0.9]], n_jobs=1)

        enumeration = enumerate_solutions(problem, opts)

        assert len(enumeration) == 1
        assert enumeration.diagnostics["box_growths"] == 0
        assert enumeration.n_starts == 3
