"""Empirical tail rate from terminal samples.

In the window between two high quantiles the log survival function is
regressed on ``y^(2/theta)``; the negated slope estimates ``c1``. Standard
errors come from a Poisson bootstrap of the full sample, applied only to the
points that can change the survival in the window.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.stats import linregress

from src.core.config import TailSlopeOptions
from src.core.errors import InsufficientDataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TailSlopeEstimate:
    slope: float
    intercept: float
    standard_error: float
    n_tail_points: int
    n_samples: int
    theta: int
    quantile_range: Tuple[float, float]

    @property
    def c1_estimate(self) -> float:
        return -self.slope

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slope": self.slope,
            "c1_estimate": self.c1_estimate,
            "intercept": self.intercept,
            "standard_error": self.standard_error,
            "n_tail_points": self.n_tail_points,
            "n_samples": self.n_samples,
            "theta": self.theta,
            "quantile_range": list(self.quantile_range),
        }


def _regressors(
    y: np.ndarray, survival: np.ndarray, opts: TailSlopeOptions
) -> Tuple[np.ndarray, np.ndarray]:
    x = y ** (2.0 / opts.theta)
    log_s = np.log(survival)
    if opts.prefactor_correction:
        log_s = log_s + np.log(y) / opts.theta
    return x, log_s


def _bootstrap_slopes(
    upper: np.ndarray,
    n_below: int,
    in_window: np.ndarray,
    opts: TailSlopeOptions,
    rng: np.random.Generator,
) -> np.ndarray:
    """Slopes refitted under Poisson(1) multiplicities of every sample."""
    slopes = np.empty(opts.n_bootstrap)
    y = upper[in_window]
    for i in range(opts.n_bootstrap):
        w = rng.poisson(1.0, size=upper.size).astype(float)
        total = rng.poisson(n_below) + w.sum()
        above = np.cumsum(w[::-1])[::-1] - w
        survival = (above + 0.5 * w)[in_window] / total
        weights = w[in_window]
        keep = weights > 0
        if keep.sum() < 3:
            slopes[i] = np.nan
            continue
        x, log_s = _regressors(y[keep], survival[keep], opts)
        slopes[i] = np.polyfit(x, log_s, 1, w=np.sqrt(weights[keep]))[0]
    return slopes


def tail_slope(
    samples: np.ndarray, opts: Optional[TailSlopeOptions] = None
) -> TailSlopeEstimate:
    """Regress the empirical log survival in the tail window.

    Args:
        samples: One-dimensional terminal samples
        opts: Window, exponent and bootstrap settings

    Returns:
        Slope (about ``-c1``), intercept and bootstrap standard error

    Raises:
        InsufficientDataError: If there are fewer than ``min_samples`` samples
            or fewer than ``min_tail_points`` positive points in the window
    """
    opts = opts or TailSlopeOptions()
    values = np.sort(np.asarray(samples, dtype=float).ravel())
    values = values[np.isfinite(values)]
    n = values.size
    if n < opts.min_samples:
        raise InsufficientDataError(
            f"Tail regression needs at least {opts.min_samples} samples, got {n}",
            n_samples=n,
        )

    lo, hi = np.quantile(values, opts.quantile_range)
    start = int(np.searchsorted(values, lo, side="left"))
    upper = values[start:]
    in_window = (upper >= lo) & (upper <= hi) & (upper > 0)
    n_tail = int(in_window.sum())
    if n_tail < opts.min_tail_points:
        raise InsufficientDataError(
            f"Only {n_tail} positive samples in the quantile window "
            f"{opts.quantile_range}, need {opts.min_tail_points}",
            n_samples=n,
            n_tail_points=n_tail,
        )

    ranks = np.arange(start, n)[in_window]
    survival = (n - ranks - 0.5) / n
    x, log_s = _regressors(upper[in_window], survival, opts)
    fit = linregress(x, log_s)

    rng = np.random.default_rng(opts.bootstrap_seed)
    slopes = _bootstrap_slopes(upper, start, in_window, opts, rng)
    se = float(np.nanstd(slopes, ddof=1))

    logger.info(
        f"Tail slope {fit.slope:.6g} +/- {se:.2g} from {n_tail} of {n} samples"
    )
    return TailSlopeEstimate(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        standard_error=se,
        n_tail_points=n_tail,
        n_samples=n,
        theta=opts.theta,
        quantile_range=opts.quantile_range,
    )
