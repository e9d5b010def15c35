"""Expansion constants from the minimizing controls.

The small-noise density of the projected diffusion behaves like

    exp(-c1 / eps^2) * exp(c2 / eps) * eps^(-l) * (c0 + O(eps))

with ``c1`` the rate function at the target and ``c2`` the largest value of
``Lambda'(target) . Y_hat_T`` over the minimizers, where ``Y_hat`` solves the
first-variation ODE along the minimizing trajectory. Tail asymptotics of
theta-scaling models and short-time asymptotics reduce to the same problem.
``c0`` is never computed.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from src.core.config import IntegratorOptions, SolverSettings
from src.core.errors import (
    ContractViolationError,
    DomainError,
    InconsistencyError,
    IntegrationError,
    MomentExplosionRegimeError,
    ScalingViolationError,
    ShootingError,
)
from src.core.minimizer import (
    EllipticityReport,
    MinimizerCandidate,
    MinimizerSet,
    build_candidate,
    check_local_ellipticity,
    hit_distance,
    select_minimizers,
)
from src.core.model import ModelSpec
from src.core.nonfocal import FocalityReport, focality_jacobian
from src.core.pipeline import ExpansionPipeline, PipelineStep, State, StepProgress
from src.core.polynomial import PolynomialField
from src.core.shooting import BvpProblem, BvpSolution, enumerate_solutions, shoot

logger = logging.getLogger(__name__)

ADMISSIBILITY_TOLERANCE = 1e-6
GRADIENT_ABS_FLOOR = 1e-10
MAX_CONTINUATION_SHRINKS = 8


class ExpansionRegime(str, Enum):
    SMALL_NOISE = "small-noise"
    TAIL = "tail"
    SHORT_TIME = "short-time"


@dataclass
class ExpansionDiagnostics:
    """Hypothesis checks and cross-checks attached to a result."""

    minimizer_count: int = 0
    candidate_count: int = 0
    solver_starts: int = 0
    failed_starts: int = 0
    search_box_half_width: float = 0.0
    ellipticity: List[str] = field(default_factory=list)
    focality: List[str] = field(default_factory=list)
    focality_determinants: List[float] = field(default_factory=list)
    admissibility_errors: List[float] = field(default_factory=list)
    hypotheses_verified: bool = False
    c2_values: List[float] = field(default_factory=list)
    c2_tie: bool = False
    c0: str = "unknown"
    gradient_method: str = "momentum"
    gradient_cross_check: Optional[List[float]] = None
    scaling_ratios: Optional[Dict[str, float]] = None
    c2_from_scaling: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ExpansionResult:
    """Expansion constants and the evidence behind them."""

    c1: float
    c2: float
    lambda_prime: List[float]
    y_hats: List[List[float]]
    theta: Optional[int]
    algebraic_exponent: float
    regime: ExpansionRegime
    target: List[float]
    diagnostics: ExpansionDiagnostics = field(default_factory=ExpansionDiagnostics)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "theta": self.theta,
            "algebraic_exponent": self.algebraic_exponent,
            "lambda_prime": list(self.lambda_prime),
            "y_hats": [list(y) for y in self.y_hats],
            "regime": self.regime.value,
            "target": list(self.target),
            "diagnostics": self.diagnostics.to_dict(),
        }

    def leading_log_density(self, y: Any) -> np.ndarray:
        """Tail log-density without the unknown constant ``log c0``."""
        if self.theta is None:
            raise ContractViolationError("Log-density curve needs a declared theta")
        ys = np.asarray(y, dtype=float)
        if np.any(ys <= 0):
            raise ContractViolationError("Log-density curve is defined for y > 0")
        inv = 1.0 / self.theta
        return (
            -self.c1 * ys ** (2.0 * inv)
            + self.c2 * ys**inv
            + (inv - 1.0) * np.log(ys)
        )


@dataclass(frozen=True)
class ShortTimeResult:
    """Squared sub-Riemannian distance to the target and the time exponent."""

    distance_squared: float
    algebraic_exponent: float
    minimizer_count: int
    target: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "regime": ExpansionRegime.SHORT_TIME.value,
            "distance_squared": self.distance_squared,
            "distance": math.sqrt(max(self.distance_squared, 0.0)),
            "algebraic_exponent": self.algebraic_exponent,
            "minimizer_count": self.minimizer_count,
            "target": list(self.target),
        }


# ---------------------------------------------------------------------------
# first variation and gradient


def first_variation(
    model: ModelSpec,
    minimizer: MinimizerCandidate,
    integrator: Optional[IntegratorOptions] = None,
) -> np.ndarray:
    """Projection of the first-variation process at maturity.

    Integrates the Hamiltonian state together with

        dX_hat = (Db(phi) + D(sigma h_dot)(phi)) X_hat dt + d_eps b(phi) dt,

    from ``X_hat_0 = x0_hat``, so the trajectory is reproduced to integrator
    accuracy rather than interpolated.
    """
    opts = integrator or IntegratorOptions()
    d = model.dim_state
    T = minimizer.flow.maturity
    start = np.concatenate([minimizer.flow.x_initial, minimizer.p0, model.x0_hat])
    if T == 0.0:
        return np.array(model.x0_hat[: model.dim_proj])

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        x, p, xh = y[:d], y[d : 2 * d], y[2 * d :]
        sig = model.decorrelated_at(x)
        dsig = model.decorrelated_jacobian_at(x)
        u = sig.T @ p
        g = np.einsum("kij,k->ij", dsig, p)
        dx = np.asarray(model.drift(x), dtype=float) + sig @ u
        dp = -(model.drift_jacobian_at(x).T @ p + g.T @ u)
        lin = model.drift_jacobian_at(x) + np.einsum("kij,i->kj", dsig, u)
        dxh = lin @ xh + model.eps_drift_at(x)
        return np.concatenate([dx, dp, dxh])

    sol = solve_ivp(
        rhs, (0.0, T), start, method=opts.method, rtol=opts.rtol, atol=opts.atol
    )
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegrationError(
            f"First-variation integration failed: {sol.message}",
            last_valid_time=float(sol.t[-1]),
        )
    return sol.y[2 * d : 2 * d + model.dim_proj, -1].copy()


def _rate_at(
    problem: BvpProblem,
    target: np.ndarray,
    guesses: Sequence[np.ndarray],
    settings: SolverSettings,
) -> float:
    shifted = problem.with_target(target)
    energies = []
    for guess in guesses:
        try:
            sol = shoot(shifted, guess, settings.shooting, settings.integrator)
        except (ShootingError, IntegrationError) as e:
            logger.debug(f"Continuation to {target.tolist()} lost a branch: {e}")
            continue
        candidate = build_candidate(shifted.model, sol.flow, shifted.target)
        energies.append(candidate.energy)
    if not energies:
        raise InconsistencyError(
            "No branch could be continued for the finite-difference gradient",
            target=target,
        )
    return min(energies)


def _gradient_by_momentum(minimizers: Sequence[MinimizerCandidate], l: int) -> np.ndarray:
    return np.array(minimizers[0].flow.p_terminal[:l], dtype=float)


def _gradient_by_differences(
    problem: BvpProblem,
    minimizers: Sequence[MinimizerCandidate],
    settings: SolverSettings,
) -> np.ndarray:
    l = problem.model.dim_proj
    guesses = [m.p0 for m in minimizers]
    grad = np.empty(l)
    for j in range(l):
        delta = 1e-3 * (1.0 + abs(problem.target[j]))
        e = np.zeros(l)
        e[j] = delta
        up = _rate_at(problem, problem.target + e, guesses, settings)
        down = _rate_at(problem, problem.target - e, guesses, settings)
        grad[j] = (up - down) / (2.0 * delta)
    return grad


def lambda_gradient(
    model: ModelSpec,
    problem: BvpProblem,
    minimizers: Sequence[MinimizerCandidate],
    method: Optional[str] = None,
    settings: Optional[SolverSettings] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Gradient of the rate function at the target.

    The momentum method reads the first ``l`` terminal momenta of a
    minimizer. The finite-difference method re-solves the boundary problem at
    ``target +- delta e_j`` starting from each minimizer's initial momentum.

    Returns:
        The gradient by ``method`` and, when cross-checking is enabled, the
        gradient by the other method

    Raises:
        DomainError: If there are no minimizers
        InconsistencyError: If the two methods disagree beyond tolerance
    """
    settings = settings or SolverSettings()
    if not minimizers:
        raise DomainError("Rate gradient needs at least one minimizer")
    method = method or settings.expansion.gradient_method
    l = model.dim_proj

    def by(name: str) -> np.ndarray:
        if name == "momentum":
            return _gradient_by_momentum(minimizers, l)
        return _gradient_by_differences(problem, minimizers, settings)

    primary = by(method)
    other = None
    if settings.expansion.gradient_cross_check:
        other = by("finite_difference" if method == "momentum" else "momentum")
        gap = float(np.linalg.norm(primary - other))
        scale = max(float(np.linalg.norm(primary)), float(np.linalg.norm(other)))
        if gap > settings.expansion.gradient_rel_tol * scale + GRADIENT_ABS_FLOOR:
            raise InconsistencyError(
                "Rate gradient methods disagree",
                primary=primary,
                cross_check=other,
                method=method,
            )
    return primary, other


# ---------------------------------------------------------------------------
# assembly


def _c2_values(lambda_prime: np.ndarray, y_hats: Sequence[np.ndarray]) -> List[float]:
    return [float(lambda_prime @ y) for y in y_hats]


def assemble_small_noise(
    problem: BvpProblem,
    minimizer_set: MinimizerSet,
    focality: Sequence[FocalityReport],
    ellipticity: Sequence[EllipticityReport],
    settings: Optional[SolverSettings] = None,
    lambda_prime: Optional[np.ndarray] = None,
    y_hats: Optional[Sequence[np.ndarray]] = None,
) -> ExpansionResult:
    """Combine minimizers, hypothesis checks and first variations into constants.

    Missing gradient or first variations are computed here. The result is
    produced even when a hypothesis is not verified; the diagnostics say so.

    Raises:
        DomainError: If the minimizing set is empty
    """
    settings = settings or SolverSettings()
    minimizers = minimizer_set.minimizers
    if not minimizers:
        raise DomainError("Empty minimizing set")
    model = problem.model
    if lambda_prime is None:
        lambda_prime, _ = lambda_gradient(model, problem, minimizers, settings=settings)
    if y_hats is None:
        y_hats = [first_variation(model, m, settings.integrator) for m in minimizers]

    values = _c2_values(lambda_prime, y_hats)
    ordered = sorted(values, reverse=True)
    c2 = ordered[0]
    tie = len(ordered) > 1 and (
        ordered[0] - ordered[1] <= settings.expansion.tie_rel_tol * (1.0 + abs(c2))
    )
    verified = (
        len(focality) == len(minimizers)
        and len(ellipticity) == len(minimizers)
        and all(f.is_nonfocal for f in focality)
        and all(e.is_elliptic for e in ellipticity)
    )
    if not verified:
        logger.warning("Expansion hypotheses not verified for every minimizer")

    diagnostics = ExpansionDiagnostics(
        minimizer_count=len(minimizers),
        candidate_count=len(minimizer_set.candidates),
        ellipticity=[e.verdict.value for e in ellipticity],
        focality=[f.verdict.value for f in focality],
        focality_determinants=[f.normalized_determinant for f in focality],
        hypotheses_verified=verified,
        c2_values=values,
        c2_tie=tie,
        gradient_method=settings.expansion.gradient_method,
    )
    return ExpansionResult(
        c1=minimizer_set.rate,
        c2=c2,
        lambda_prime=[float(v) for v in lambda_prime],
        y_hats=[[float(v) for v in y] for y in y_hats],
        theta=None,
        algebraic_exponent=-float(model.dim_proj),
        regime=ExpansionRegime.SMALL_NOISE,
        target=[float(v) for v in problem.target],
        diagnostics=diagnostics,
    )


def _minimal_solutions(state: State) -> List[BvpSolution]:
    solutions = state["enumeration"].solutions
    marked = state["minimizer_set"].candidates
    return [s for s, c in zip(solutions, marked) if c.is_minimal]


def _search_steps(problem: BvpProblem, settings: SolverSettings) -> List[PipelineStep]:
    model = problem.model

    def enumerate_step(state: State) -> None:
        state["enumeration"] = enumerate_solutions(
            problem, settings.shooting, settings.integrator
        )

    def select_step(state: State) -> None:
        enumeration = state["enumeration"]
        if not enumeration.solutions:
            raise DomainError(
                "Boundary problem has no solution in the search box",
                starts=enumeration.n_starts,
                box_half_width=enumeration.box_half_width,
            )
        candidates = [
            build_candidate(model, s.flow, problem.target) for s in enumeration
        ]
        state["minimizer_set"] = select_minimizers(
            candidates, settings.expansion.minimizer_rel_tol
        )

    def ellipticity_step(state: State) -> None:
        state["ellipticity"] = [
            check_local_ellipticity(model, m.flow)
            for m in state["minimizer_set"].minimizers
        ]

    def focality_step(state: State) -> None:
        state["focality"] = [
            focality_jacobian(model, s, settings.focality, settings.integrator)
            for s in _minimal_solutions(state)
        ]

    def admissibility_step(state: State) -> None:
        errors = [
            hit_distance(model, m, problem.x0, settings.integrator)
            for m in state["minimizer_set"].minimizers
        ]
        worst = max(errors, default=0.0)
        if worst > ADMISSIBILITY_TOLERANCE:
            logger.warning(f"Re-integrated control misses the target by {worst:.3e}")
        state["admissibility"] = errors

    return [
        PipelineStep("enumerate", enumerate_step),
        PipelineStep("select", select_step),
        PipelineStep("ellipticity", ellipticity_step),
        PipelineStep("focality", focality_step),
        PipelineStep("admissibility", admissibility_step),
    ]


def _small_noise_pipeline(
    problem: BvpProblem,
    settings: SolverSettings,
    progress: Optional[Callable[[StepProgress], None]],
    extra_steps: Sequence[PipelineStep] = (),
) -> ExpansionPipeline:
    model = problem.model

    def gradient_step(state: State) -> None:
        primary, other = lambda_gradient(
            model, problem, state["minimizer_set"].minimizers, settings=settings
        )
        state["lambda_prime"] = primary
        state["gradient_cross_check"] = other

    def variation_step(state: State) -> None:
        state["y_hats"] = [
            first_variation(model, m, settings.integrator)
            for m in state["minimizer_set"].minimizers
        ]

    def assemble_step(state: State) -> None:
        result = assemble_small_noise(
            problem,
            state["minimizer_set"],
            state["focality"],
            state["ellipticity"],
            settings,
            lambda_prime=state["lambda_prime"],
            y_hats=state["y_hats"],
        )
        enumeration = state["enumeration"]
        diag = result.diagnostics
        diag.solver_starts = enumeration.n_starts
        diag.failed_starts = enumeration.n_failed
        diag.search_box_half_width = enumeration.box_half_width
        diag.admissibility_errors = list(state["admissibility"])
        other = state["gradient_cross_check"]
        diag.gradient_cross_check = None if other is None else other.tolist()
        state["result"] = result

    steps = _search_steps(problem, settings) + [
        PipelineStep("gradient", gradient_step),
        PipelineStep("first_variation", variation_step),
        PipelineStep("assemble", assemble_step),
    ]
    return ExpansionPipeline(steps + list(extra_steps), progress_callback=progress)


def small_noise_expansion(
    problem: BvpProblem,
    settings: Optional[SolverSettings] = None,
    progress: Optional[Callable[[StepProgress], None]] = None,
) -> ExpansionResult:
    """Run the full small-noise pipeline for one boundary problem.

    Raises:
        PipelineStepError: Wrapping the failure of the named step
    """
    settings = settings or SolverSettings()
    state = _small_noise_pipeline(problem, settings, progress).run()
    result: ExpansionResult = state["result"]
    logger.info(
        f"Small-noise constants for {problem.model.name}: "
        f"c1={result.c1!r}, c2={result.c2!r}"
    )
    return result


# ---------------------------------------------------------------------------
# tail and short time


def _continue_rate(
    problem: BvpProblem,
    minimizer: MinimizerCandidate,
    goal: float,
    settings: SolverSettings,
) -> float:
    """Rate function at ``goal`` by natural-parameter continuation from target 1."""
    factor = settings.expansion.continuation_factor
    current, p0 = 1.0, np.array(minimizer.p0, dtype=float)
    rate = minimizer.energy
    shrink = 0
    while not math.isclose(current, goal, rel_tol=1e-14):
        step = factor ** (0.5**shrink)
        nxt = min(current * step, goal) if goal > current else max(current / step, goal)
        shifted = problem.with_target([nxt])
        try:
            sol = shoot(shifted, p0, settings.shooting, settings.integrator)
        except (ShootingError, IntegrationError) as e:
            shrink += 1
            if shrink > MAX_CONTINUATION_SHRINKS:
                raise ScalingViolationError(
                    f"Continuation to target {goal} stalled at {current}",
                    reached=current,
                ) from e
            continue
        current, p0 = nxt, sol.p0
        rate = build_candidate(shifted.model, sol.flow, shifted.target).energy
        shrink = max(shrink - 1, 0)
    return rate


def check_theta_scaling(
    problem: BvpProblem,
    minimizer: MinimizerCandidate,
    theta: int,
    settings: SolverSettings,
) -> Dict[str, float]:
    """Verify that ``Lambda(s) s^(-2/theta)`` is constant over the test targets.

    Raises:
        ScalingViolationError: If a ratio deviates beyond ``scaling_tol``
    """
    base = minimizer.energy
    ratios: Dict[str, float] = {}
    for s in settings.expansion.scaling_targets:
        rate = _continue_rate(problem, minimizer, float(s), settings)
        ratio = rate * float(s) ** (-2.0 / theta)
        ratios[repr(float(s))] = ratio
        if abs(ratio - base) > settings.expansion.scaling_tol * abs(base):
            raise ScalingViolationError(
                f"Rate function does not scale with theta={theta}",
                target=s,
                ratio=ratio,
                base=base,
            )
    return ratios


def tail_expansion(
    problem: BvpProblem,
    theta: int,
    settings: Optional[SolverSettings] = None,
    progress: Optional[Callable[[StepProgress], None]] = None,
) -> ExpansionResult:
    """Tail constants of a theta-scaling model from its unit-target problem.

    The density satisfies ``f(y) ~ exp(-c1 y^(2/theta) + c2 y^(1/theta))
    y^(1/theta - 1) c0`` as ``y -> infinity``.

    Raises:
        ContractViolationError: If ``theta`` is not 1 or 2, ``l != 1`` or the
            target is not 1
        PipelineStepError: Wrapping a ScalingViolationError when the declared
            scaling does not hold, or any other step failure
    """
    settings = settings or SolverSettings()
    if theta not in (1, 2):
        raise ContractViolationError(f"theta must be 1 or 2, got {theta}")
    if problem.model.dim_proj != 1 or problem.target[0] != 1.0:
        raise ContractViolationError("Tail expansion needs l = 1 and target 1")

    def scaling_step(state: State) -> None:
        lowest = state["minimizer_set"].minimizers[0]
        state["scaling_ratios"] = check_theta_scaling(problem, lowest, theta, settings)

    state = _small_noise_pipeline(
        problem, settings, progress, [PipelineStep("scaling", scaling_step)]
    ).run()
    small: ExpansionResult = state["result"]
    y_max = max((y[0] for y in small.y_hats), default=0.0)
    small.diagnostics.scaling_ratios = state["scaling_ratios"]
    small.diagnostics.c2_from_scaling = (2.0 * y_max / theta) * small.c1
    result = replace(
        small,
        theta=theta,
        algebraic_exponent=1.0 / theta - 1.0,
        regime=ExpansionRegime.TAIL,
    )
    logger.info(f"Tail constants (theta={theta}): c1={result.c1!r}, c2={result.c2!r}")
    return result


def driftless(model: ModelSpec) -> ModelSpec:
    """Copy of ``model`` with zero drift and zero drift correction."""
    d = model.dim_state
    zero = PolynomialField.zeros((d,), d)
    return model.with_fields(
        drift=zero,
        drift_jacobian=zero.jacobian,
        drift_hessian=zero.hessian,
        drift_eps_deriv=None,
        name=f"{model.name}-driftless",
    )


def short_time_expansion(
    model: ModelSpec,
    target: Sequence[float],
    settings: Optional[SolverSettings] = None,
    progress: Optional[Callable[[StepProgress], None]] = None,
) -> ShortTimeResult:
    """Squared distance ``d^2 = 2 Lambda`` of the driftless problem at unit time.

    With ``eps = sqrt(t)`` the short-time density is
    ``exp(-d^2 / 2t) t^(-l/2) c0``.
    """
    settings = settings or SolverSettings()
    problem = BvpProblem(model=driftless(model), target=np.asarray(target), T=1.0, x0=model.x0)
    state = ExpansionPipeline(
        _search_steps(problem, settings), progress_callback=progress
    ).run()
    minimizer_set: MinimizerSet = state["minimizer_set"]
    if not all(f.is_nonfocal for f in state["focality"]):
        logger.warning("Short-time minimizer not certified non-focal")
    return ShortTimeResult(
        distance_squared=2.0 * minimizer_set.rate,
        algebraic_exponent=-model.dim_proj / 2.0,
        minimizer_count=len(minimizer_set),
        target=[float(v) for v in problem.target],
    )


# ---------------------------------------------------------------------------
# implied volatility wing


def implied_vol_wing(B1: float, B2: float) -> Tuple[float, float]:
    """Wing coefficients of ``sigma_BS(k)^2 T ~ (beta1 sqrt(k) + beta2)^2``.

    Raises:
        MomentExplosionRegimeError: If ``B1 <= 2``
    """
    if not B1 > 2.0:
        raise MomentExplosionRegimeError(
            f"Wing formula needs B1 > 2, got {B1}", B1=B1
        )
    beta1 = math.sqrt(2.0) * (math.sqrt(B1 - 1.0) - math.sqrt(B1 - 2.0))
    beta2 = (B2 / math.sqrt(2.0)) * (1.0 / math.sqrt(B1 - 2.0) - 1.0 / math.sqrt(B1 - 1.0))
    return beta1, beta2


def wing_curve(beta1: float, beta2: float, k: Any) -> np.ndarray:
    """Leading total implied variance ``(beta1 sqrt(k) + beta2)^2``."""
    ks = np.asarray(k, dtype=float)
    if np.any(ks < 0):
        raise ContractViolationError("Wing curve needs nonnegative log-strikes")
    return (beta1 * np.sqrt(ks) + beta2) ** 2


def wing_inputs(result: ExpansionResult) -> Tuple[float, float]:
    """``(B1, B2) = (c1 + 1, c2)`` for a theta = 2 tail result."""
    if result.theta != 2:
        raise ContractViolationError("Wing inputs need a theta = 2 tail expansion")
    return result.c1 + 1.0, result.c2
