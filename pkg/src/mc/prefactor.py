"""Rough estimate of the tail prefactor ``c0`` from samples.

The expansion does not provide ``c0``. Given ``c1``, ``c2`` and ``theta`` the
predicted survival is ``c0 * I(y)`` with
``I(y) = int_y^inf exp(-c1 u^(2/theta) + c2 u^(1/theta)) u^(1/theta - 1) du``;
the estimate is the median of ``S_emp(y) / I(y)`` over tail points. It is a
heuristic and is reported as such.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
from scipy.integrate import quad

from src.core.errors import ContractViolationError, InsufficientDataError

logger = logging.getLogger(__name__)

MAX_EVALUATIONS = 200


@dataclass(frozen=True)
class PrefactorEstimate:
    c0_estimate: float
    spread: float
    n_points: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c0_estimate": self.c0_estimate,
            "spread": self.spread,
            "n_points": self.n_points,
            "note": "heuristic estimate, not a computed constant",
        }


def shape_integral(y: float, c1: float, c2: float, theta: int) -> float:
    """``I(y)``, scaled by ``exp(c1 y^(2/theta) - c2 y^(1/theta))`` for range."""
    e2, e1 = 2.0 / theta, 1.0 / theta
    shift = -c1 * y**e2 + c2 * y**e1

    def integrand(u: float) -> float:
        return math.exp(-c1 * u**e2 + c2 * u**e1 - shift) * u ** (e1 - 1.0)

    value, _ = quad(integrand, y, np.inf, limit=200)
    return value


def fit_prefactor(
    samples: np.ndarray,
    c1: float,
    c2: float,
    theta: int,
    quantile_range: Tuple[float, float] = (0.995, 0.99995),
) -> PrefactorEstimate:
    """Median ratio of empirical survival to the predicted tail shape.

    Raises:
        ContractViolationError: If ``c1`` is not positive or theta not in {1, 2}
        InsufficientDataError: If the window holds no positive samples
    """
    if c1 <= 0 or theta not in (1, 2):
        raise ContractViolationError(
            f"Need c1 > 0 and theta in {{1, 2}}, got c1={c1}, theta={theta}"
        )
    values = np.sort(np.asarray(samples, dtype=float).ravel())
    n = values.size
    lo, hi = np.quantile(values, quantile_range)
    idx = np.flatnonzero((values >= lo) & (values <= hi) & (values > 0))
    if idx.size == 0:
        raise InsufficientDataError("No positive samples in the prefactor window")
    if idx.size > MAX_EVALUATIONS:
        idx = idx[np.linspace(0, idx.size - 1, MAX_EVALUATIONS).astype(int)]

    ratios = []
    for i in idx:
        y = values[i]
        survival = (n - i - 0.5) / n
        log_shape = -c1 * y ** (2.0 / theta) + c2 * y ** (1.0 / theta)
        ratios.append(survival / (shape_integral(y, c1, c2, theta) * math.exp(log_shape)))
    ratios_arr = np.asarray(ratios)
    c0 = float(np.median(ratios_arr))
    q25, q75 = np.quantile(ratios_arr, [0.25, 0.75])
    logger.info(f"Prefactor estimate {c0:.4g} from {idx.size} tail points")
    return PrefactorEstimate(c0_estimate=c0, spread=float(q75 - q25), n_points=int(idx.size))
