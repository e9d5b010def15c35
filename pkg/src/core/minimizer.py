"""Candidate optimal controls, their energies and the minimizing set."""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline

from src.core.config import IntegratorOptions
from src.core.errors import DomainError, IntegrationError
from src.core.flow import FlowResult
from src.core.model import ModelSpec

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class DiscretizedControl:
    """Control derivative ``h_dot`` sampled on the reporting grid."""

    times: np.ndarray
    values: np.ndarray

    @property
    def dim_noise(self) -> int:
        return int(self.values.shape[1])

    def interpolant(self) -> CubicSpline:
        return CubicSpline(self.times, self.values, axis=0)


@dataclass(frozen=True, eq=False)
class MinimizerCandidate:
    """A Hamiltonian trajectory that solves the boundary problem."""

    control: DiscretizedControl
    energy: float
    flow: FlowResult
    p0: np.ndarray
    target: np.ndarray
    is_minimal: bool = False

    def marked(self, is_minimal: bool) -> "MinimizerCandidate":
        return replace(self, is_minimal=is_minimal)


@dataclass(frozen=True)
class MinimizerSet:
    """Minimizing controls and the rate function value they attain."""

    minimizers: List[MinimizerCandidate]
    rate: float
    candidates: List[MinimizerCandidate]

    def __len__(self) -> int:
        return len(self.minimizers)


class EllipticityVerdict(str, Enum):
    ELLIPTIC = "elliptic"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class EllipticityReport:
    """Outcome of the local ellipticity check along a trajectory."""

    is_elliptic: bool
    witness_time: Optional[float]

    @property
    def verdict(self) -> EllipticityVerdict:
        if self.is_elliptic:
            return EllipticityVerdict.ELLIPTIC
        return EllipticityVerdict.INDETERMINATE


def reconstruct_control(model: ModelSpec, flow: FlowResult) -> DiscretizedControl:
    """h_dot_i(t) = <sigma_tilde_i(x_t), p_t> on the flow's reporting grid."""
    if model.vectorized:
        sig = np.asarray(model.diffusion(flow.positions)) @ model.factor
        values = np.einsum("nki,nk->ni", sig, flow.momenta)
    else:
        values = np.array(
            [model.decorrelated_at(x).T @ p for x, p in zip(flow.positions, flow.momenta)]
        )
    return DiscretizedControl(times=np.asarray(flow.times), values=values)


def energy(control: DiscretizedControl) -> float:
    """Half the squared Cameron-Martin norm, by composite Simpson quadrature."""
    if control.times.size < 2 or control.times[-1] == control.times[0]:
        return 0.0
    speed = np.sum(control.values**2, axis=1)
    return 0.5 * float(simpson(speed, x=control.times))


def build_candidate(
    model: ModelSpec, flow: FlowResult, target: np.ndarray
) -> MinimizerCandidate:
    control = reconstruct_control(model, flow)
    return MinimizerCandidate(
        control=control,
        energy=energy(control),
        flow=flow,
        p0=np.asarray(flow.p_initial).copy(),
        target=np.asarray(target, dtype=float),
    )


def select_minimizers(
    candidates: Sequence[MinimizerCandidate], rel_tol: float = 1e-6
) -> MinimizerSet:
    """Keep candidates whose energy is within ``rel_tol`` of the smallest.

    Raises:
        DomainError: If no candidates are given
    """
    if not candidates:
        raise DomainError("No candidate controls to select minimizers from")
    rate = min(c.energy for c in candidates)
    cutoff = rate + rel_tol * abs(rate)
    marked = [c.marked(c.energy <= cutoff) for c in candidates]
    minimizers = [c for c in marked if c.is_minimal]
    logger.info(
        f"Selected {len(minimizers)} of {len(candidates)} candidates "
        f"(rate {rate:.12g})"
    )
    return MinimizerSet(minimizers=minimizers, rate=rate, candidates=marked)


def check_local_ellipticity(model: ModelSpec, flow: FlowResult) -> EllipticityReport:
    """Look for a grid time where the diffusion spans the whole state space."""
    d = model.dim_state
    if model.dim_noise < d:
        return EllipticityReport(is_elliptic=False, witness_time=None)
    for t, x in zip(flow.times, flow.positions):
        singular = np.linalg.svd(model.decorrelated_at(x), compute_uv=False)
        if singular[0] > 0 and singular[d - 1] > RANK_TOLERANCE * singular[0]:
            return EllipticityReport(is_elliptic=True, witness_time=float(t))
    return EllipticityReport(is_elliptic=False, witness_time=None)


def integrate_controlled_path(
    model: ModelSpec,
    control: DiscretizedControl,
    x0: Optional[np.ndarray] = None,
    opts: Optional[IntegratorOptions] = None,
) -> np.ndarray:
    """Solve d phi = sigma0(phi) dt + sigma_tilde(phi) h_dot dt; return phi_T."""
    opts = opts or IntegratorOptions()
    start = model.x0 if x0 is None else np.asarray(x0, dtype=float)
    t0, t1 = float(control.times[0]), float(control.times[-1])
    if t1 == t0:
        return np.array(start, dtype=float)
    h_dot = control.interpolant()

    def rhs(t: float, phi: np.ndarray) -> np.ndarray:
        return np.asarray(model.drift(phi), dtype=float) + model.decorrelated_at(phi) @ h_dot(t)

    sol = solve_ivp(
        rhs,
        (t0, t1),
        start,
        method=opts.method,
        rtol=opts.rtol,
        atol=opts.atol,
        max_step=(t1 - t0) / (control.times.size - 1),
    )
    if sol.status != 0:
        raise IntegrationError(
            f"Controlled path integration failed: {sol.message}",
            last_valid_time=float(sol.t[-1]),
        )
    return sol.y[:, -1]


def hit_distance(
    model: ModelSpec,
    candidate: MinimizerCandidate,
    x0: Optional[np.ndarray] = None,
    opts: Optional[IntegratorOptions] = None,
) -> float:
    """Distance by which the re-integrated control misses the target."""
    phi_T = integrate_controlled_path(model, candidate.control, x0, opts)
    return float(np.linalg.norm(phi_T[: model.dim_proj] - candidate.target))
