"""Test builders for models and solver settings.

Solver defaults in the package are tuned for reliability; the builders here
shrink the multi-start search so tests stay fast. Stein-Stein runs use
``STEIN_STEIN_LATTICE``: 16 starts in a box of half width 4, which contains
the lowest branch of the unit cell and lets box growth reach the strongly
correlated cells. Closed-form momenta are oracles for comparisons only.
"""

from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.catalog.black_scholes import BlackScholesParams, black_scholes_model
from src.catalog.registry import default_registry
from src.catalog.stein_stein import SteinSteinParams, q0_for_target, solve_correlated
from src.core.config import (
    ExpansionOptions,
    FocalityOptions,
    IntegratorOptions,
    ShootingOptions,
    SolverSettings,
)
from src.core.minimizer import MinimizerSet, build_candidate, select_minimizers
from src.core.model import ModelSpec
from src.core.polynomial import PolynomialField, monomial
from src.core.shooting import BvpProblem, SolutionEnumeration, enumerate_solutions

STEIN_STEIN_LATTICE: Tuple[int, float] = (4, 4.0)


class SettingsBuilder:
    """Builder for SolverSettings with a small search box and few starts."""

    def __init__(self) -> None:
        self._lattice_k = 1
        self._box = 3.0
        self._seeds: List[List[float]] = []
        self._n_jobs: Optional[int] = 1
        self._focality: Dict[str, Any] = {}
        self._expansion: Dict[str, Any] = {}
        self._integrator: Dict[str, Any] = {}

    def with_seeds(self, seeds: List[List[float]]) -> "SettingsBuilder":
        self._seeds.extend(seeds)
        return self

    def with_lattice(self, k: int, box: float = 3.0) -> "SettingsBuilder":
        self._lattice_k = k
        self._box = box
        return self

    def with_focality(self, **kwargs: Any) -> "SettingsBuilder":
        self._focality.update(kwargs)
        return self

    def with_expansion(self, **kwargs: Any) -> "SettingsBuilder":
        self._expansion.update(kwargs)
        return self

    def with_integrator(self, **kwargs: Any) -> "SettingsBuilder":
        self._integrator.update(kwargs)
        return self

    def build(self) -> SolverSettings:
        return SolverSettings(
            integrator=IntegratorOptions(**self._integrator),
            shooting=ShootingOptions(
                lattice_k=self._lattice_k,
                box_half_width=self._box,
                seeds=self._seeds,
                n_jobs=self._n_jobs,
            ),
            focality=FocalityOptions(**self._focality),
            expansion=ExpansionOptions(**self._expansion),
        )


class ModelFactory:
    """Small models with known solutions."""

    @staticmethod
    def brownian(dim: int = 1, dim_proj: int = 1) -> ModelSpec:
        """Driftless Brownian motion, ``sigma = I``."""
        diffusion = [
            [[monomial(dim, 1.0)] if i == j else [] for j in range(dim)]
            for i in range(dim)
        ]
        return ModelSpec.from_polynomials(
            drift=PolynomialField.zeros((dim,), dim),
            diffusion=PolynomialField.matrix(diffusion, dim),
            correlation=np.eye(dim),
            x0=np.zeros(dim),
            x0_hat=np.zeros(dim),
            dim_proj=dim_proj,
            name="brownian",
        )

    @staticmethod
    def ornstein_uhlenbeck(kappa: float = 1.0, sigma: float = 0.5) -> ModelSpec:
        """``dX = -kappa X dt + sigma dW`` from ``x0 = 0``."""
        return ModelSpec.from_polynomials(
            drift=PolynomialField.vector([[monomial(1, -kappa, x0=1)]], 1),
            diffusion=PolynomialField.matrix([[[monomial(1, sigma)]]], 1),
            correlation=[[1.0]],
            x0=[0.0],
            x0_hat=[0.0],
            dim_proj=1,
            name="ou",
        )

    @staticmethod
    def callable_ou(kappa: float = 1.0, sigma: float = 0.5) -> ModelSpec:
        """Same OU model from plain callables, derivatives by differences."""
        return ModelSpec(
            dim_state=1,
            dim_noise=1,
            dim_proj=1,
            drift=lambda x: -kappa * np.asarray(x, dtype=float),
            diffusion=lambda x: np.full((1, 1), sigma),
            correlation=np.eye(1),
            x0=np.zeros(1),
            x0_hat=np.zeros(1),
            name="ou-callable",
        )

    @staticmethod
    def black_scholes(sigma: float = 1.0, T: float = 1.0, y0: float = 0.0) -> ModelSpec:
        return black_scholes_model(BlackScholesParams(sigma=sigma, T=T, y0=y0))

    @staticmethod
    def correlated_pair(rho: float) -> ModelSpec:
        """Two Brownian coordinates with constant correlation ``rho``."""
        dim = 2
        return ModelSpec.from_polynomials(
            drift=PolynomialField.zeros((dim,), dim),
            diffusion=PolynomialField.matrix(
                [[[monomial(dim, 1.0)], []], [[], [monomial(dim, 1.0)]]], dim
            ),
            correlation=[[1.0, rho], [rho, 1.0]],
            x0=[0.0, 0.0],
            x0_hat=[0.0, 0.0],
            dim_proj=1,
            name="correlated-pair",
        )


def stein_stein_problem(params: SteinSteinParams, target: float = 1.0) -> BvpProblem:
    return default_registry().get("stein_stein").build_problem(params, target)


def stein_stein_settings(**expansion: Any) -> SolverSettings:
    """Unseeded settings for Stein-Stein pipeline runs."""
    k, box = STEIN_STEIN_LATTICE
    return SettingsBuilder().with_lattice(k, box).with_expansion(**expansion).build()


def stein_stein_momenta(params: SteinSteinParams, target: float = 1.0) -> List[List[float]]:
    """Closed-form initial momenta of the two minimizers, ``q0 > 0`` first."""
    solution = solve_correlated(params, n_branches=1)
    q0 = q0_for_target(params, solution.p_plus, solution.r1, target)
    return [[solution.p_plus, q0], [solution.p_plus, -q0]]


def stein_stein_search(
    params: SteinSteinParams, target: float = 1.0
) -> Tuple[BvpProblem, SolutionEnumeration]:
    """Unseeded multi-start search on a Stein-Stein cell."""
    problem = stein_stein_problem(params, target)
    settings = stein_stein_settings()
    return problem, enumerate_solutions(problem, settings.shooting, settings.integrator)


def stein_stein_minimizers(
    params: SteinSteinParams, target: float = 1.0
) -> Tuple[BvpProblem, MinimizerSet]:
    problem, found = stein_stein_search(params, target)
    candidates = [build_candidate(problem.model, s.flow, problem.target) for s in found]
    return problem, select_minimizers(candidates)
