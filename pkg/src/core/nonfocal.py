"""Non-focality of minimizers for the point-to-subspace problem.

The check perturbs the terminal data of a solution in the directions left
free by the boundary conditions: the last ``d - l`` position coordinates
(``z``) and the first ``l`` momentum coordinates (``q``). The backward flow
maps the perturbed data to time 0; the Jacobian of the resulting initial
position with respect to ``(z, q)``, columns in that order, must be
invertible.
"""

import functools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.core.config import FocalityOptions, IntegratorOptions, SolverSettings
from src.core.errors import ContractViolationError, HamExpandError
from src.core.flow import flow_backward
from src.core.model import ModelSpec
from src.core.parallel import ordered_map
from src.core.shooting import BvpProblem, BvpSolution, enumerate_solutions

logger = logging.getLogger(__name__)

AGREEMENT_TOLERANCE = 1e-4


class FocalityMethod(str, Enum):
    VARIATIONAL = "analytic-variational"
    FINITE_DIFFERENCE = "finite-difference"


class FocalityVerdict(str, Enum):
    NON_FOCAL = "non-focal"
    FOCAL = "focal or near-focal"
    ERROR = "error"


@dataclass(frozen=True, eq=False)
class FocalityReport:
    """Focality Jacobian at one minimizer and its verdict."""

    jacobian: np.ndarray
    determinant: float
    normalized_determinant: float
    is_nonfocal: bool
    method: FocalityMethod
    fd_jacobian: Optional[np.ndarray] = None
    fd_agreement: Optional[float] = None

    @property
    def verdict(self) -> FocalityVerdict:
        return FocalityVerdict.NON_FOCAL if self.is_nonfocal else FocalityVerdict.FOCAL


def hadamard_normalized(matrix: np.ndarray) -> tuple:
    """Determinant and determinant divided by the product of row norms."""
    det = float(np.linalg.det(matrix))
    scale = float(np.prod(np.linalg.norm(matrix, axis=1)))
    normalized = det / scale if scale > 0 else 0.0
    return det, normalized


def _terminal_perturbation(
    model: ModelSpec, xT: np.ndarray, pT: np.ndarray
) -> Callable[[np.ndarray], tuple]:
    d, l = model.dim_state, model.dim_proj

    def perturbed(zq: np.ndarray) -> tuple:
        x, p = xT.copy(), pT.copy()
        x[l:] += zq[: d - l]
        p[:l] += zq[d - l :]
        return x, p

    return perturbed


def _fd_jacobian(
    model: ModelSpec,
    solution: BvpSolution,
    T: float,
    step: float,
    integrator: IntegratorOptions,
) -> np.ndarray:
    d = model.dim_state
    xT, pT = np.array(solution.flow.x_terminal), np.array(solution.flow.p_terminal)
    perturbed = _terminal_perturbation(model, xT, pT)
    base = np.concatenate([xT[model.dim_proj :], pT[: model.dim_proj]])
    jac = np.empty((d, d))
    for j in range(d):
        h = step * max(1.0, abs(base[j]))
        e = np.zeros(d)
        e[j] = h
        up = flow_backward(model, *perturbed(e), T, integrator)
        down = flow_backward(model, *perturbed(-e), T, integrator)
        jac[:, j] = (up.x_initial - down.x_initial) / (2.0 * h)
    return jac


def _row_normalized_gap(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.maximum(np.linalg.norm(a, axis=1), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b) / scale[:, None]))


def focality_jacobian(
    model: ModelSpec,
    solution: BvpSolution,
    opts: Optional[FocalityOptions] = None,
    integrator: Optional[IntegratorOptions] = None,
) -> FocalityReport:
    """Jacobian of the projected backward flow under free terminal perturbations.

    Args:
        model: Model specification
        solution: Converged boundary problem solution
        opts: Threshold and cross-check options
        integrator: Integrator options for the backward flows

    Returns:
        Report with the Jacobian, its Hadamard-normalized determinant and
        the verdict; with ``cross_check`` also the finite-difference Jacobian

    Raises:
        ContractViolationError: If the solution has zero maturity
        IntegrationError: If a backward flow fails
    """
    opts = opts or FocalityOptions()
    integrator = integrator or IntegratorOptions()
    d, l = model.dim_state, model.dim_proj
    T = solution.flow.maturity
    if T <= 0:
        raise ContractViolationError("Focality needs a trajectory with T > 0")

    if opts.method == "finite_difference":
        method = FocalityMethod.FINITE_DIFFERENCE
        jac = _fd_jacobian(model, solution, T, opts.fd_step, integrator)
    else:
        method = FocalityMethod.VARIATIONAL
        back = flow_backward(
            model,
            solution.flow.x_terminal,
            solution.flow.p_terminal,
            T,
            integrator,
            with_variation=True,
        )
        var = back.variational
        assert var is not None
        jac = np.hstack([var[:d, l:d], var[:d, d : d + l]])
    det, normalized = hadamard_normalized(jac)

    fd_jac, agreement = None, None
    if opts.cross_check and method is FocalityMethod.VARIATIONAL:
        fd_jac = _fd_jacobian(model, solution, T, opts.fd_step, integrator)
        agreement = _row_normalized_gap(jac, fd_jac)
        if agreement > AGREEMENT_TOLERANCE:
            logger.warning(
                f"Variational and finite-difference focality Jacobians differ "
                f"by {agreement:.3e} ({model.name})"
            )

    is_nonfocal = abs(normalized) > opts.tol_focal
    logger.debug(
        f"Focality determinant {det:.6e} (normalized {normalized:.6e}) "
        f"for {model.name}: {'non-focal' if is_nonfocal else 'focal'}"
    )
    return FocalityReport(
        jacobian=jac,
        determinant=det,
        normalized_determinant=normalized,
        is_nonfocal=is_nonfocal,
        method=method,
        fd_jacobian=fd_jac,
        fd_agreement=agreement,
    )


@dataclass(frozen=True)
class SweepRow:
    """Outcome of the focality check at one parameter cell."""

    params: Dict[str, Any]
    reports: List[FocalityReport] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def verdict(self) -> FocalityVerdict:
        if self.error is not None or not self.reports:
            return FocalityVerdict.ERROR
        if all(r.is_nonfocal for r in self.reports):
            return FocalityVerdict.NON_FOCAL
        return FocalityVerdict.FOCAL

    @property
    def worst(self) -> Optional[FocalityReport]:
        if not self.reports:
            return None
        return min(self.reports, key=lambda r: abs(r.normalized_determinant))


ProblemBuilder = Callable[[Mapping[str, Any]], BvpProblem]


def _sweep_cell(
    build_problem: ProblemBuilder,
    settings: SolverSettings,
    params: Mapping[str, Any],
) -> SweepRow:
    try:
        problem = build_problem(params)
        solutions = enumerate_solutions(problem, settings.shooting, settings.integrator)
        if not solutions:
            return SweepRow(params=dict(params), error="no boundary problem solution")
        best = solutions[0].energy or 0.0
        cutoff = best + settings.expansion.minimizer_rel_tol * abs(best)
        reports = [
            focality_jacobian(problem.model, sol, settings.focality, settings.integrator)
            for sol in solutions
            if (sol.energy or 0.0) <= cutoff
        ]
        return SweepRow(params=dict(params), reports=reports)
    except (HamExpandError, ValidationError, ArithmeticError, np.linalg.LinAlgError) as e:
        logger.warning(f"Sweep cell {dict(params)} failed: {e}")
        return SweepRow(params=dict(params), error=f"{type(e).__name__}: {e}")


def sweep_nonfocality(
    cells: Sequence[Mapping[str, Any]],
    build_problem: ProblemBuilder,
    settings: Optional[SolverSettings] = None,
    n_jobs: Optional[int] = None,
) -> List[SweepRow]:
    """Focality verdicts over a parameter grid, one row per cell in input order.

    Cells run in parallel; shooting inside a cell is kept on one worker.
    Failures are recorded on the row and do not stop the sweep.
    """
    settings = (settings or SolverSettings()).with_workers(1)
    work = functools.partial(_sweep_cell, build_problem, settings)
    rows = ordered_map(work, list(cells), n_jobs=n_jobs)
    n_bad = sum(1 for r in rows if r.verdict is not FocalityVerdict.NON_FOCAL)
    logger.info(f"Swept {len(rows)} cells, {n_bad} not certified non-focal")
    return rows


def sweep_table(rows: Sequence[SweepRow]) -> pd.DataFrame:
    """Flatten sweep rows into a table of parameters, determinant and verdict."""
    records = []
    for row in rows:
        worst = row.worst
        records.append(
            {
                **row.params,
                "n_minimizers": len(row.reports),
                "determinant": worst.determinant if worst else np.nan,
                "normalized_determinant": (
                    worst.normalized_determinant if worst else np.nan
                ),
                "verdict": row.verdict.value,
                "error": row.error or "",
            }
        )
    if not records:
        return pd.DataFrame(
            columns=[
                "n_minimizers",
                "determinant",
                "normalized_determinant",
                "verdict",
                "error",
            ]
        )
    return pd.DataFrame.from_records(records)
