"""Closed-form solution of the Stein-Stein tail problem.

The model is

    dY = -1/2 Z^2 dt + Z dW1,    dZ = (a + b Z) dt + c dW2,    d<W1, W2> = rho dt,

with ``Y_0 = 0`` and ``Z_0 = sigma0``. It scales with ``theta = 2``: the
density tail of ``Y_T`` is governed by the small-noise problem of the
rescaled state ``(eps^2 Y, eps Z)``, whose limit drift is ``(-z^2/2, b z)``,
drift correction ``(0, a)`` and initial perturbation ``(0, sigma0)``.

Along a Hamiltonian trajectory the momentum ``p`` of ``y`` is constant and
``z`` oscillates with frequency ``chi`` where

    chi^2 = c^2 p (p - 1) - (b + rho c p)^2.

Transversality ``q_T = 0`` becomes ``r cos r = (b + rho c p) T sin r`` for
``r = chi T``, and the target condition fixes ``q0``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy.optimize import brentq
from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import ParameterError, UnsupportedParameterError
from src.core.model import ModelSpec
from src.core.polynomial import PolynomialField, monomial
from src.core.shooting import BvpProblem

logger = logging.getLogger(__name__)

ROOT_XTOL = 1e-14
ROOT_GRID = 256
SERIES_THRESHOLD = 1e-3


class SteinSteinParams(BaseModel):
    """Stein-Stein parameters; ``a`` is the drift level, not the target."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    a: float = Field(0.0, ge=0, description="Drift level of Z")
    b: float = Field(0.0, le=0, description="Mean reversion of Z")
    c: float = Field(1.0, gt=0, description="Volatility of Z")
    sigma0: float = Field(0.0, ge=0, description="Initial volatility Z_0")
    rho: float = Field(0.0, gt=-1, lt=1, description="Correlation of the drivers")
    T: float = Field(1.0, gt=0, description="Maturity")


@dataclass(frozen=True)
class SteinSteinSolution:
    """Lowest branch of the closed-form solution plus higher branch roots."""

    r1: float
    p_plus: float
    chi: float
    q0_plus: float
    q0_minus: float
    c1: float
    c2: float
    branch_roots: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "theta": 2,
            "r1": self.r1,
            "p_plus": self.p_plus,
            "chi": self.chi,
            "q0_plus": self.q0_plus,
            "q0_minus": self.q0_minus,
            "branch_roots": [list(pair) for pair in self.branch_roots],
        }


def rescale_to_unit_maturity(params: SteinSteinParams) -> SteinSteinParams:
    """Parameters with ``T = 1`` giving ``Y_1`` the law of the original ``Y_T``."""
    T = params.T
    return params.model_copy(
        update={
            "a": params.a * T**1.5,
            "b": params.b * T,
            "c": params.c * T,
            "sigma0": params.sigma0 * math.sqrt(T),
            "T": 1.0,
        }
    )


def _polish(fn: Any, dfn: Any, root: float, lo: float, hi: float) -> float:
    slope = dfn(root)
    if slope == 0.0:
        return root
    candidate = root - fn(root) / slope
    if lo <= candidate <= hi and abs(fn(candidate)) < abs(fn(root)):
        return candidate
    return root


def solve_root_uncorrelated(b: float, c: float, T: float, k: int = 1) -> float:
    """k-th strictly positive root of ``r cos r - b T sin r``, ``k >= 1``.

    The root lies in ``((k - 1/2) pi, k pi)``; for ``b = 0`` it is
    ``(k - 1/2) pi``.
    """
    if k < 1:
        raise ParameterError(f"Root index starts at 1, got {k}")
    if b > 0 or c <= 0 or T <= 0:
        raise ParameterError(f"Need b <= 0, c > 0, T > 0; got {b}, {c}, {T}")
    lo, hi = (k - 0.5) * math.pi, k * math.pi
    if b == 0.0:
        return lo
    bT = b * T

    def fn(r: float) -> float:
        return r * math.cos(r) - bT * math.sin(r)

    def dfn(r: float) -> float:
        return math.cos(r) - r * math.sin(r) - bT * math.cos(r)

    root = brentq(fn, lo, hi, xtol=ROOT_XTOL)
    return _polish(fn, dfn, root, lo, hi)


def p_plus(params: SteinSteinParams, r: float) -> float:
    """Positive root ``p`` of ``chi(p)^2 = (r / T)^2``."""
    b, c, rho, T = params.b, params.c, params.rho, params.T
    lin = 1.0 + 2.0 * rho * b / c
    const = b**2 / c**2 + r**2 / (c**2 * T**2)
    one_minus = 1.0 - rho**2
    return (lin + math.sqrt(lin**2 + 4.0 * one_minus * const)) / (2.0 * one_minus)


def _require_supported(params: SteinSteinParams) -> None:
    if params.rho > 0:
        raise UnsupportedParameterError(
            f"Positive correlation is not supported, got rho={params.rho}"
        )


def solve_root_correlated(params: SteinSteinParams, k: int = 1) -> float:
    """k-th root of ``r cos r - (b + rho c p+(r)) T sin r`` in ``[(k-1/2) pi, k pi)``.

    The first sign change on a uniform grid is refined by Brent's method.
    """
    _require_supported(params)
    if k < 1:
        raise ParameterError(f"Root index starts at 1, got {k}")
    b, c, rho, T = params.b, params.c, params.rho, params.T

    def fn(r: float) -> float:
        return r * math.cos(r) - (b + rho * c * p_plus(params, r)) * T * math.sin(r)

    lo, hi = (k - 0.5) * math.pi, k * math.pi
    if fn(lo) == 0.0:
        return lo
    grid = np.linspace(lo, hi, ROOT_GRID + 1)
    values = np.array([fn(r) for r in grid])
    crossings = np.nonzero(np.sign(values[:-1]) != np.sign(values[1:]))[0]
    if crossings.size == 0:
        raise UnsupportedParameterError(
            f"No sign change of the transversality equation in branch {k}",
            params=params.model_dump(),
        )
    i = int(crossings[0])
    if values[i + 1] == 0.0:
        return float(grid[i + 1])
    return float(brentq(fn, grid[i], grid[i + 1], xtol=ROOT_XTOL))


def q0_for_target(params: SteinSteinParams, p: float, r: float, target: float = 1.0) -> float:
    """Positive initial momentum of ``z`` that makes ``y_T`` hit ``target``."""
    c, rho, T = params.c, params.rho, params.T
    b_tilde = params.b + rho * c * p
    amp = c**2 * (2.0 * p - 1.0) - 2.0 * rho * c * b_tilde
    bracket = amp * (2.0 * r - math.sin(2.0 * r)) + 2.0 * rho * c * (r / T) * (
        1.0 - math.cos(2.0 * r)
    )
    return (2.0 / c) * math.sqrt(2.0 * r**3 * target / (T**3 * bracket))


def first_variation_closed_form(params: SteinSteinParams, t: Any) -> np.ndarray:
    """``Z_hat_t = sigma0 e^{bt} + (a/b)(e^{bt} - 1)``, or ``sigma0 + a t`` for ``b = 0``."""
    ts = np.asarray(t, dtype=float)
    if params.b == 0.0:
        return params.sigma0 + params.a * ts
    growth = np.exp(params.b * ts)
    return params.sigma0 * growth + (params.a / params.b) * np.expm1(params.b * ts)


def solve_correlated(params: SteinSteinParams, n_branches: int = 3) -> SteinSteinSolution:
    """Closed-form tail constants at unit target.

    ``c1 = p+`` and ``c2 = q0+ (sigma0 + a tan(chi T / 2) / chi)``. At
    ``rho = 0`` this reduces to the uncorrelated formulas.

    Raises:
        UnsupportedParameterError: If ``rho > 0``
    """
    _require_supported(params)
    if params.rho == 0.0:
        roots = [
            solve_root_uncorrelated(params.b, params.c, params.T, k)
            for k in range(1, n_branches + 1)
        ]
    else:
        roots = [solve_root_correlated(params, k) for k in range(1, n_branches + 1)]
    r1 = roots[0]
    p = p_plus(params, r1)
    chi = r1 / params.T
    q0 = q0_for_target(params, p, r1)
    c2 = q0 * (params.sigma0 + params.a * math.tan(r1 / 2.0) / chi)
    logger.debug(f"Stein-Stein closed form {params.model_dump()}: r1={r1!r}, p={p!r}")
    return SteinSteinSolution(
        r1=r1,
        p_plus=p,
        chi=chi,
        q0_plus=q0,
        q0_minus=-q0,
        c1=p,
        c2=c2,
        branch_roots=[(r, p_plus(params, r)) for r in roots],
    )


def _trig(u: float, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``cos(chi t)``, ``sin(chi t)/chi``, ``S3`` and ``C2`` for ``u = chi^2``.

    ``S3 = (2 chi t - sin 2 chi t) / chi^3`` and ``C2 = (1 - cos 2 chi t) / chi^2``,
    continued to ``u <= 0`` through hyperbolic functions and a series at 0.
    """
    if np.all(np.abs(u) * t**2 < SERIES_THRESHOLD):
        cos = 1.0 - u * t**2 / 2.0 + u**2 * t**4 / 24.0
        sinc = t - u * t**3 / 6.0 + u**2 * t**5 / 120.0
        s3 = 4.0 * t**3 / 3.0 - 4.0 * t**5 * u / 15.0 + 8.0 * t**7 * u**2 / 315.0
        c2 = 2.0 * t**2 - 2.0 * t**4 * u / 3.0 + 4.0 * t**6 * u**2 / 45.0
        return cos, sinc, s3, c2
    if u > 0:
        chi = math.sqrt(u)
        x = chi * t
        return (
            np.cos(x),
            np.sin(x) / chi,
            (2.0 * x - np.sin(2.0 * x)) / chi**3,
            (1.0 - np.cos(2.0 * x)) / chi**2,
        )
    kappa = math.sqrt(-u)
    x = kappa * t
    return (
        np.cosh(x),
        np.sinh(x) / kappa,
        (np.sinh(2.0 * x) - 2.0 * x) / kappa**3,
        (np.cosh(2.0 * x) - 1.0) / kappa**2,
    )


def flow_closed_form(
    params: SteinSteinParams, p: float, q0: float, t: Any
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(y_t, z_t, q_t)`` of the Hamiltonian flow started at ``(0, 0; p, q0)``."""
    ts = np.asarray(t, dtype=float)
    c, rho = params.c, params.rho
    b_tilde = params.b + rho * c * p
    u = c**2 * p * (p - 1.0) - b_tilde**2
    cos, sinc, s3, c2 = _trig(u, ts)
    z = q0 * c**2 * sinc
    q = q0 * (cos - b_tilde * sinc)
    amp = c**2 * (2.0 * p - 1.0) - 2.0 * rho * c * b_tilde
    y = q0**2 * c**2 / 8.0 * (amp * s3 + 2.0 * rho * c * c2)
    return y, z, q


def stein_stein_model(params: SteinSteinParams) -> ModelSpec:
    """Small-noise model whose unit-target problem yields the tail constants."""
    dim = 2
    drift = PolynomialField.vector(
        [[monomial(dim, -0.5, x1=2)], [monomial(dim, params.b, x1=1)]], dim
    )
    diffusion = PolynomialField.matrix(
        [
            [[monomial(dim, 1.0, x1=1)], []],
            [[], [monomial(dim, params.c)]],
        ],
        dim,
    )
    eps_drift = PolynomialField.vector([[], [monomial(dim, params.a)]], dim)
    return ModelSpec.from_polynomials(
        drift=drift,
        diffusion=diffusion,
        correlation=[[1.0, params.rho], [params.rho, 1.0]],
        x0=[0.0, 0.0],
        x0_hat=[0.0, params.sigma0],
        dim_proj=1,
        drift_eps_deriv=eps_drift,
        name="stein_stein",
    )


def tail_problem(params: SteinSteinParams, target: float = 1.0) -> BvpProblem:
    return BvpProblem(model=stein_stein_model(params), target=np.array([target]), T=params.T)
