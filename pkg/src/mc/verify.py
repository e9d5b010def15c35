"""Admissibility oracle for minimizing controls."""

from typing import Optional

import numpy as np

from src.core.config import IntegratorOptions
from src.core.minimizer import MinimizerCandidate, hit_distance
from src.core.model import ModelSpec


def verify_control(
    model: ModelSpec,
    minimizer: MinimizerCandidate,
    x0: Optional[np.ndarray] = None,
    opts: Optional[IntegratorOptions] = None,
) -> float:
    """``|Pi_l phi_T - a|`` for the path driven by the minimizer's control.

    The noise is replaced by ``h'(t) dt``; the drift is the ``eps -> 0`` limit.
    """
    return hit_distance(model, minimizer, x0, opts)
