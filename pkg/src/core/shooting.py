"""Shooting for the Hamiltonian boundary problem.

The boundary problem fixes the initial position, the first ``l`` terminal
positions (the target) and the last ``d - l`` terminal momenta
(transversality). The unknown is the initial momentum ``p0``; Newton's method
is run on

    residual(p0) = (x_T[:l] - target, p_T[l:])

with the Jacobian taken from the variational flow.
"""

import functools
import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from src.core.config import IntegratorOptions, ShootingOptions
from src.core.errors import (
    ContractViolationError,
    IntegrationError,
    NoConvergenceError,
    ShootingError,
    SingularJacobianError,
)
from src.core.flow import FlowResult, flow_with_variation
from src.core.minimizer import energy, reconstruct_control
from src.core.model import ModelSpec
from src.core.parallel import ordered_map

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
STALL_RATIO = 0.5
ESCAPE_FACTOR = 4.0
SCREENING_REPORT_POINTS = 65
SCREENING_DEDUP_RTOL = 1e-4


@dataclass(frozen=True, eq=False)
class BvpProblem:
    """Arrive at ``target`` in the first ``l`` coordinates at time ``T``."""

    model: ModelSpec
    target: np.ndarray
    T: float
    x0: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        l = self.model.dim_proj
        target = np.atleast_1d(np.asarray(self.target, dtype=float))
        if target.shape != (l,):
            raise ContractViolationError(
                f"Target must have shape ({l},), got {target.shape}"
            )
        if not np.isfinite(self.T) or self.T <= 0:
            raise ContractViolationError(f"Maturity must be positive, got {self.T}")
        start = self.model.x0 if self.x0 is None else np.asarray(self.x0, dtype=float)
        if start.shape != (self.model.dim_state,):
            raise ContractViolationError(
                f"x0 must have shape ({self.model.dim_state},), got {start.shape}"
            )
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "x0", start)

    @property
    def dim(self) -> int:
        return self.model.dim_state

    def with_target(self, target: Sequence[float]) -> "BvpProblem":
        return BvpProblem(model=self.model, target=np.asarray(target), T=self.T, x0=self.x0)

    def residual(self, flow: FlowResult) -> np.ndarray:
        l = self.model.dim_proj
        return np.concatenate(
            [flow.x_terminal[:l] - self.target, flow.p_terminal[l:]]
        )


@dataclass(frozen=True, eq=False)
class BvpSolution:
    """A converged shooting solution."""

    p0: np.ndarray
    residual_norm: float
    flow: FlowResult
    newton_iterations: int
    energy: Optional[float] = None


@dataclass(frozen=True)
class SolutionEnumeration:
    """Deduplicated solutions of a multi-start search, sorted by energy."""

    solutions: List[BvpSolution]
    n_starts: int
    n_failed: int
    box_half_width: float
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self) -> Iterator[BvpSolution]:
        return iter(self.solutions)

    def __len__(self) -> int:
        return len(self.solutions)

    def __getitem__(self, index: int) -> BvpSolution:
        return self.solutions[index]


def _evaluate(
    problem: BvpProblem, p0: np.ndarray, integrator: IntegratorOptions
) -> tuple:
    d, l = problem.dim, problem.model.dim_proj
    flow = flow_with_variation(problem.model, problem.x0, p0, problem.T, integrator)
    var = flow.variational
    assert var is not None
    jac = np.vstack([var[:l, d:], var[d + l :, d:]])
    return flow, problem.residual(flow), jac


def _newton(
    problem: BvpProblem,
    p: np.ndarray,
    opts: ShootingOptions,
    integrator: IntegratorOptions,
    tol: float,
    max_iterations: int,
    radius: Optional[float] = None,
    stall: Optional[int] = None,
) -> BvpSolution:
    flow, res, jac = _evaluate(problem, p, integrator)
    norm = float(np.linalg.norm(res))
    history = [norm]

    for iteration in range(max_iterations + 1):
        if norm <= tol:
            logger.debug(f"Shooting converged in {iteration} iterations ({norm:.2e})")
            return BvpSolution(
                p0=p, residual_norm=norm, flow=flow, newton_iterations=iteration
            )
        if iteration == max_iterations:
            break
        if stall is not None and iteration >= stall:
            if norm > STALL_RATIO * history[iteration - stall]:
                raise NoConvergenceError(
                    "Residual stalled", last_residual=norm, iterations=iteration
                )

        singular = np.linalg.svd(jac, compute_uv=False)
        if singular[0] == 0.0 or singular[-1] <= opts.singular_tol * singular[0]:
            raise SingularJacobianError(
                "Shooting Jacobian is singular", last_residual=norm, iterations=iteration
            )
        step = np.linalg.solve(jac, -res)
        if radius is not None:
            length = float(np.linalg.norm(step))
            if length > radius:
                step *= radius / length

        lam = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = p + lam * step
            try:
                t_flow, t_res, t_jac = _evaluate(problem, trial, integrator)
                t_norm = float(np.linalg.norm(t_res))
            except IntegrationError:
                t_norm = np.inf
            if t_norm <= tol or t_norm < (1.0 - ARMIJO * lam) * norm:
                p, flow, res, jac, norm = trial, t_flow, t_res, t_jac, t_norm
                break
            lam *= 0.5
        else:
            raise NoConvergenceError(
                "Line search found no descent", last_residual=norm, iterations=iteration
            )
        if radius is not None and np.linalg.norm(p) > ESCAPE_FACTOR * radius:
            raise NoConvergenceError(
                "Iterate left the search region", last_residual=norm, iterations=iteration
            )
        history.append(norm)

    raise NoConvergenceError(
        f"No convergence after {max_iterations} iterations",
        last_residual=norm,
        iterations=max_iterations,
    )


def shoot(
    problem: BvpProblem,
    p0_guess: Sequence[float],
    opts: Optional[ShootingOptions] = None,
    integrator: Optional[IntegratorOptions] = None,
) -> BvpSolution:
    """Damped Newton iteration on the shooting residual.

    Args:
        problem: Boundary problem to solve
        p0_guess: Starting initial momentum
        opts: Newton tolerances and limits
        integrator: Integrator options for the flows

    Returns:
        Converged solution

    Raises:
        ContractViolationError: If the guess is not a finite vector of length d
        SingularJacobianError: If the Newton Jacobian is numerically singular
        NoConvergenceError: If the iteration or line-search limits are hit
        IntegrationError: If the flow from the guess itself fails
    """
    opts = opts or ShootingOptions()
    integrator = integrator or IntegratorOptions()
    p = np.asarray(p0_guess, dtype=float).copy()
    if p.shape != (problem.dim,) or not np.all(np.isfinite(p)):
        raise ContractViolationError(
            f"Guess must be a finite vector of length {problem.dim}"
        )
    return _newton(problem, p, opts, integrator, opts.tol_bvp, opts.max_iterations)


def start_lattice(
    dim: int, T: float, opts: ShootingOptions, half_width: Optional[float] = None
) -> np.ndarray:
    """Low-discrepancy lattice of ``2**dim * lattice_k`` starting momenta.

    Points fill the box ``[-w, w]^dim`` with ``w = box_half_width / T`` unless
    ``half_width`` is given.
    """
    n_points = 2**dim * opts.lattice_k
    sampler = qmc.Sobol(d=dim, scramble=False)
    if n_points & (n_points - 1) == 0:
        unit = sampler.random_base2(m=n_points.bit_length() - 1)
    else:
        unit = sampler.random(n_points)
    # shift off the dyadic grid so no start sits exactly on zero momentum
    unit = (unit + 0.5 / n_points) % 1.0
    width = opts.box_half_width / T if half_width is None else half_width
    return qmc.scale(unit, -width * np.ones(dim), width * np.ones(dim))


def _screening_integrator(
    integrator: IntegratorOptions, opts: ShootingOptions
) -> IntegratorOptions:
    return integrator.model_copy(
        update={
            "rtol": max(integrator.rtol, opts.search_rtol),
            "atol": max(integrator.atol, opts.search_rtol * 1e-2),
            "n_report": min(integrator.n_report, SCREENING_REPORT_POINTS),
        }
    )


def _screen(
    problem: BvpProblem,
    opts: ShootingOptions,
    integrator: IntegratorOptions,
    radius: float,
    start: np.ndarray,
) -> Optional[np.ndarray]:
    try:
        sol = _newton(
            problem,
            np.array(start, dtype=float),
            opts,
            integrator,
            max(opts.search_tol, opts.tol_bvp),
            opts.search_max_iterations,
            radius=radius,
            stall=opts.stall_iterations,
        )
    except (ShootingError, IntegrationError) as e:
        logger.debug(f"Start {np.round(start, 4).tolist()} dropped: {e}")
        return None
    return sol.p0


def _polish(
    problem: BvpProblem,
    opts: ShootingOptions,
    integrator: IntegratorOptions,
    start: np.ndarray,
) -> Optional[BvpSolution]:
    try:
        return shoot(problem, start, opts, integrator)
    except (ShootingError, IntegrationError) as e:
        logger.debug(f"Screened root {np.round(start, 6).tolist()} lost: {e}")
        return None


def _distinct(points: Sequence[np.ndarray], rel_tol: float) -> List[np.ndarray]:
    kept: List[np.ndarray] = []
    for point in sorted(points, key=tuple):
        scale = rel_tol * (1.0 + float(np.linalg.norm(point)))
        if all(np.linalg.norm(point - other) > scale for other in kept):
            kept.append(point)
    return kept


def enumerate_solutions(
    problem: BvpProblem,
    opts: Optional[ShootingOptions] = None,
    integrator: Optional[IntegratorOptions] = None,
) -> SolutionEnumeration:
    """Multi-start shooting over a start lattice plus user seeds.

    Every start is first screened by a coarse Newton run: cheaper integrator
    tolerances, steps capped at the box half width, and early abandonment of
    starts that stall or leave the search region. The distinct screened roots
    are then polished with the full tolerances. When no start converges the
    box grows by ``box_growth``, at most ``max_box_growths`` times.

    Solutions closer than ``dedup_rel_tol * (1 + |p0|)`` in initial momentum
    are merged. The result is sorted by control energy, then
    lexicographically by ``p0``, independent of worker scheduling.
    """
    opts = opts or ShootingOptions()
    integrator = integrator or IntegratorOptions()
    coarse = _screening_integrator(integrator, opts)
    width = opts.box_half_width / problem.T
    n_starts = n_failed = 0
    screened: List[np.ndarray] = []

    for level in range(opts.max_box_growths + 1):
        starts = list(start_lattice(problem.dim, problem.T, opts, half_width=width))
        if level == 0:
            starts.extend(np.asarray(seed, dtype=float) for seed in opts.seeds)
        screen = functools.partial(_screen, problem, opts, coarse, width)
        found = ordered_map(screen, starts, n_jobs=opts.n_jobs)
        n_starts += len(starts)
        n_failed += sum(1 for p in found if p is None)
        screened = [p for p in found if p is not None]
        if screened or level == opts.max_box_growths:
            break
        logger.info(f"No start converged in box {width:.4g}; growing it")
        width *= opts.box_growth

    candidates = _distinct(screened, SCREENING_DEDUP_RTOL)
    polish = functools.partial(_polish, problem, opts, integrator)
    polished = ordered_map(polish, candidates, n_jobs=opts.n_jobs)

    converged: List[BvpSolution] = []
    for sol in polished:
        if sol is None:
            continue
        e = energy(reconstruct_control(problem.model, sol.flow))
        converged.append(
            BvpSolution(
                p0=sol.p0,
                residual_norm=sol.residual_norm,
                flow=sol.flow,
                newton_iterations=sol.newton_iterations,
                energy=e,
            )
        )
    converged.sort(key=lambda s: (s.energy, tuple(s.p0)))

    unique: List[BvpSolution] = []
    for sol in converged:
        scale = opts.dedup_rel_tol * (1.0 + float(np.linalg.norm(sol.p0)))
        if all(np.linalg.norm(sol.p0 - kept.p0) > scale for kept in unique):
            unique.append(sol)

    logger.info(
        f"Enumerated {len(unique)} distinct solutions from {n_starts} starts "
        f"({n_failed} dropped while screening, box {width:.4g})"
    )
    return SolutionEnumeration(
        solutions=unique,
        n_starts=n_starts,
        n_failed=n_failed,
        box_half_width=width,
        diagnostics={
            "screened": len(screened),
            "polished": len(converged),
            "box_growths": level,
        },
    )
