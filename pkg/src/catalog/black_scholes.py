"""Black-Scholes log-price as a theta = 1 reference model.

``dY = -sigma^2/2 dt + sigma dW`` from ``Y_0 = y0``. Scaling by ``eps`` puts
the whole drift and the initial value into the first-order perturbation, so
the limit dynamics are driftless and start at 0.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm

from src.core.model import ModelSpec
from src.core.polynomial import PolynomialField, monomial
from src.core.shooting import BvpProblem


class BlackScholesParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    sigma: float = Field(1.0, gt=0, description="Log-price volatility")
    T: float = Field(1.0, gt=0, description="Maturity")
    y0: float = Field(0.0, description="Initial log price")


@dataclass(frozen=True)
class BlackScholesConstants:
    c1: float
    c2: float
    theta: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return {"c1": self.c1, "c2": self.c2, "theta": self.theta}


def black_scholes_constants(
    sigma: float, T: float, y0: float = 0.0
) -> BlackScholesConstants:
    """``c1 = 1/(2 sigma^2 T)`` and ``c2 = (y0 - sigma^2 T/2)/(sigma^2 T)``.

    ``c2`` is the coefficient of ``y`` in the exact Gaussian log-density.
    """
    params = BlackScholesParams(sigma=sigma, T=T, y0=y0)
    var = params.sigma**2 * params.T
    return BlackScholesConstants(c1=1.0 / (2.0 * var), c2=(params.y0 - var / 2.0) / var)


def black_scholes_log_density(
    y: Any, sigma: float, T: float, y0: float = 0.0
) -> np.ndarray:
    """Exact log-density of ``Y_T``."""
    params = BlackScholesParams(sigma=sigma, T=T, y0=y0)
    mean = params.y0 - params.sigma**2 * params.T / 2.0
    scale = params.sigma * math.sqrt(params.T)
    return norm.logpdf(np.asarray(y, dtype=float), loc=mean, scale=scale)


def focality_scalar(params: BlackScholesParams) -> float:
    """``d y0 / d p_T`` of the backward flow, ``-sigma^2 T``."""
    return -(params.sigma**2) * params.T


def black_scholes_model(params: BlackScholesParams) -> ModelSpec:
    dim = 1
    return ModelSpec.from_polynomials(
        drift=PolynomialField.zeros((1,), dim),
        diffusion=PolynomialField.matrix([[[monomial(dim, params.sigma)]]], dim),
        correlation=[[1.0]],
        x0=[0.0],
        x0_hat=[params.y0],
        dim_proj=1,
        drift_eps_deriv=PolynomialField.vector(
            [[monomial(dim, -(params.sigma**2) / 2.0)]], dim
        ),
        name="black_scholes",
    )


def tail_problem(params: BlackScholesParams, target: float = 1.0) -> BvpProblem:
    return BvpProblem(model=black_scholes_model(params), target=np.array([target]), T=params.T)

