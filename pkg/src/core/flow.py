"""Forward and backward Hamiltonian flows with optional variational matrix."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from src.core.config import IntegratorOptions
from src.core.errors import ContractViolationError, IntegrationError
from src.core.model import (
    HamiltonianState,
    ModelSpec,
    hamiltonian_along,
    hamiltonian_jacobian,
    vector_field_at,
)

logger = logging.getLogger(__name__)


class FlowDirection(str, Enum):
    """Direction in which a flow was integrated."""

    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Trajectory of the Hamiltonian flow on a uniform reporting grid.

    ``times`` always run from 0 to T. For a forward flow the variational
    matrix is ``d(x_T, p_T)/d(x_0, p_0)``; for a backward flow it is
    ``d(x_0, p_0)/d(x_T, p_T)``.
    """

    times: np.ndarray
    positions: np.ndarray
    momenta: np.ndarray
    hamiltonian_value: float
    hamiltonian_drift: float
    direction: FlowDirection
    variational: Optional[np.ndarray] = None

    @property
    def maturity(self) -> float:
        return float(self.times[-1])

    @property
    def x_initial(self) -> np.ndarray:
        return self.positions[0]

    @property
    def p_initial(self) -> np.ndarray:
        return self.momenta[0]

    @property
    def x_terminal(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def p_terminal(self) -> np.ndarray:
        return self.momenta[-1]

    def state_at(self, index: int) -> HamiltonianState:
        return HamiltonianState(
            x=self.positions[index], p=self.momenta[index], t=float(self.times[index])
        )


class _NonFiniteState(Exception):
    def __init__(self, t: float) -> None:
        self.t = t
        super().__init__(f"non-finite vector field at t={t}")


def _validate_start(model: ModelSpec, x: np.ndarray, p: np.ndarray, T: float) -> None:
    d = model.dim_state
    if x.shape != (d,) or p.shape != (d,):
        raise ContractViolationError(
            f"Expected start data of shape ({d},), got {x.shape} and {p.shape}"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise ContractViolationError("Start data must be finite")
    if not np.isfinite(T) or T < 0:
        raise ContractViolationError(f"Maturity must be a finite nonnegative time, got {T}")


def _integrate(
    model: ModelSpec,
    x_start: np.ndarray,
    p_start: np.ndarray,
    T: float,
    opts: IntegratorOptions,
    direction: FlowDirection,
    with_variation: bool,
) -> FlowResult:
    d = model.dim_state
    n = 2 * d

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        x, p = y[:d], y[d:n]
        if with_variation:
            dx, dp, jac = hamiltonian_jacobian(model, x, p)
            dvar = jac @ y[n:].reshape(n, n)
            out = np.concatenate([dx, dp, dvar.ravel()])
        else:
            out = np.concatenate(vector_field_at(model, x, p))
        if not np.all(np.isfinite(out)):
            raise _NonFiniteState(_t)
        return out

    y0 = np.concatenate([x_start, p_start])
    if with_variation:
        y0 = np.concatenate([y0, np.eye(n).ravel()])

    if T == 0.0:
        ys = np.repeat(y0[None, :], opts.n_report, axis=0)
        times = np.zeros(opts.n_report)
    else:
        t_end = T if direction is FlowDirection.FORWARD else 0.0
        t_start = 0.0 if direction is FlowDirection.FORWARD else T
        t_eval = np.linspace(t_start, t_end, opts.n_report)
        try:
            sol = solve_ivp(
                rhs,
                (t_start, t_end),
                y0,
                method=opts.method,
                t_eval=t_eval,
                rtol=opts.rtol,
                atol=opts.atol,
            )
        except _NonFiniteState as e:
            raise IntegrationError(
                f"Hamiltonian flow blew up near t={e.t:.6g}", last_valid_time=e.t
            ) from e
        if sol.status != 0:
            last = float(sol.t[-1]) if sol.t.size else t_start
            raise IntegrationError(
                f"Integrator stopped: {sol.message}", last_valid_time=last
            )
        ys = sol.y.T
        times = sol.t
        if direction is FlowDirection.BACKWARD:
            ys = ys[::-1]
            times = times[::-1]

    positions = ys[:, :d].copy()
    momenta = ys[:, d:n].copy()
    energies = hamiltonian_along(model, positions, momenta)
    h_ref = float(energies[-1] if direction is FlowDirection.BACKWARD else energies[0])
    drift = float(np.max(np.abs(energies - h_ref)))
    tol_h = opts.hamiltonian_rel_tol * (1.0 + abs(h_ref))
    if drift > tol_h:
        logger.warning(
            f"Hamiltonian drift {drift:.3e} exceeds tolerance {tol_h:.3e} "
            f"({model.name}, T={T})"
        )

    variational = None
    if with_variation:
        end = ys[0] if direction is FlowDirection.BACKWARD else ys[-1]
        variational = end[n:].reshape(n, n).copy()

    for arr in (times, positions, momenta):
        arr.setflags(write=False)
    return FlowResult(
        times=times,
        positions=positions,
        momenta=momenta,
        hamiltonian_value=h_ref,
        hamiltonian_drift=drift,
        direction=direction,
        variational=variational,
    )


def flow_forward(
    model: ModelSpec,
    x0: np.ndarray,
    p0: np.ndarray,
    T: float,
    opts: Optional[IntegratorOptions] = None,
) -> FlowResult:
    """Integrate the Hamiltonian ODEs from ``(x0, p0)`` over ``[0, T]``.

    Args:
        model: Model specification
        x0: Initial position
        p0: Initial momentum
        T: Maturity, must be positive
        opts: Integrator options

    Returns:
        Trajectory on the uniform reporting grid

    Raises:
        ContractViolationError: If ``T <= 0`` or the data have wrong shape
        IntegrationError: If the integrator fails before reaching ``T``
    """
    x, p = np.asarray(x0, dtype=float), np.asarray(p0, dtype=float)
    _validate_start(model, x, p, T)
    if T <= 0:
        raise ContractViolationError(f"flow_forward needs T > 0, got {T}")
    return _integrate(
        model, x, p, T, opts or IntegratorOptions(), FlowDirection.FORWARD, False
    )


def flow_backward(
    model: ModelSpec,
    xT: np.ndarray,
    pT: np.ndarray,
    T: float,
    opts: Optional[IntegratorOptions] = None,
    with_variation: bool = False,
) -> FlowResult:
    """Integrate the Hamiltonian ODEs backwards from terminal data at ``T``.

    With ``with_variation`` the result carries ``d(x_0, p_0)/d(x_T, p_T)``.
    """
    x, p = np.asarray(xT, dtype=float), np.asarray(pT, dtype=float)
    _validate_start(model, x, p, T)
    if T <= 0:
        raise ContractViolationError(f"flow_backward needs T > 0, got {T}")
    return _integrate(
        model,
        x,
        p,
        T,
        opts or IntegratorOptions(),
        FlowDirection.BACKWARD,
        with_variation,
    )


def flow_with_variation(
    model: ModelSpec,
    x0: np.ndarray,
    p0: np.ndarray,
    T: float,
    opts: Optional[IntegratorOptions] = None,
) -> FlowResult:
    """Forward flow together with ``d(x_T, p_T)/d(x_0, p_0)``.

    The variational matrix solves the linearized Hamiltonian system with
    identity initial value; ``T = 0`` returns the identity.
    """
    x, p = np.asarray(x0, dtype=float), np.asarray(p0, dtype=float)
    _validate_start(model, x, p, T)
    return _integrate(
        model, x, p, T, opts or IntegratorOptions(), FlowDirection.FORWARD, True
    )
