"""Diffusion model specifications and the control Hamiltonian.

A :class:`ModelSpec` describes the small-noise family

    dX = b(eps, X) dt + eps * sigma(X) dW,    X_0 = x0 + eps * x0_hat,

through its limit drift ``b(0, .)`` (``drift``), the first-order drift
correction ``d/deps b(0, .)`` (``drift_eps_deriv``), the diffusion matrix and
the correlation matrix of the driving Brownian motion. Everything downstream
works with the decorrelated diffusion ``sigma @ L`` where ``L L^T`` is the
correlation matrix, so the independent-noise formulas apply unchanged.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lapack

from src.core.errors import (
    ContractViolationError,
    InvalidCorrelationError,
    ModelSpecError,
)
from src.core.polynomial import PolynomialField

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]
MatrixField = Callable[[np.ndarray], np.ndarray]
DerivativeField = Callable[[np.ndarray], np.ndarray]

PSD_TOLERANCE = 1e-12
JACOBIAN_CHECK_RTOL = 1e-5
HESSIAN_FD_STEP = 1e-4


@dataclass(frozen=True, eq=False)
class HamiltonianState:
    """A cotangent point ``(x, p)`` at time ``t``."""

    x: np.ndarray
    p: np.ndarray
    t: float = 0.0


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Immutable specification of a projected small-noise diffusion.

    Jacobian callables return arrays with the differentiated axis last:
    ``drift_jacobian(x)[k, j] = d drift_k / d x_j`` and
    ``diffusion_jacobian(x)[k, i, j] = d sigma_ki / d x_j``. Hessians append a
    second differentiated axis. Missing derivatives fall back to central
    differences; ``finite_difference=True`` forces the fallback.
    """

    dim_state: int
    dim_noise: int
    dim_proj: int
    drift: VectorField
    diffusion: MatrixField
    correlation: np.ndarray
    x0: np.ndarray
    x0_hat: np.ndarray
    drift_eps_deriv: Optional[VectorField] = None
    drift_jacobian: Optional[DerivativeField] = None
    diffusion_jacobian: Optional[DerivativeField] = None
    drift_hessian: Optional[DerivativeField] = None
    diffusion_hessian: Optional[DerivativeField] = None
    finite_difference: bool = False
    vectorized: bool = False
    fd_step: float = 1e-6
    name: str = "model"
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        d, m, l = self.dim_state, self.dim_noise, self.dim_proj
        if d < 1 or m < 1:
            raise ModelSpecError(f"Need dim_state >= 1 and dim_noise >= 1, got {d}, {m}")
        if not 1 <= l <= d:
            raise ModelSpecError(f"dim_proj must lie in [1, {d}], got {l}")

        for name, shape in (("x0", (d,)), ("x0_hat", (d,)), ("correlation", (m, m))):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ModelSpecError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        factor = correlation_factor(self.correlation)
        factor.setflags(write=False)
        object.__setattr__(self, "factor", factor)

        if np.shape(self.drift(self.x0)) != (d,):
            raise ModelSpecError(f"drift must map R^{d} to R^{d}")
        if np.shape(self.diffusion(self.x0)) != (d, m):
            raise ModelSpecError(f"diffusion must return a {d}x{m} matrix")
        if np.shape(self.eps_drift_at(self.x0)) != (d,):
            raise ModelSpecError(f"drift_eps_deriv must map R^{d} to R^{d}")

        self._validate_jacobians()

    # ------------------------------------------------------------------
    # construction helpers

    @classmethod
    def from_polynomials(
        cls,
        drift: PolynomialField,
        diffusion: PolynomialField,
        correlation: Any,
        x0: Any,
        x0_hat: Any,
        dim_proj: int,
        drift_eps_deriv: Optional[PolynomialField] = None,
        name: str = "polynomial",
    ) -> "ModelSpec":
        """Build a model whose fields are polynomials with exact derivatives."""
        d = drift.dim
        if drift.shape != (d,) or diffusion.dim != d or len(diffusion.shape) != 2:
            raise ModelSpecError("Polynomial field shapes are inconsistent")
        return cls(
            dim_state=d,
            dim_noise=diffusion.shape[1],
            dim_proj=dim_proj,
            drift=drift,
            diffusion=diffusion,
            correlation=correlation,
            x0=x0,
            x0_hat=x0_hat,
            drift_eps_deriv=drift_eps_deriv,
            drift_jacobian=drift.jacobian,
            diffusion_jacobian=diffusion.jacobian,
            drift_hessian=drift.hessian,
            diffusion_hessian=diffusion.hessian,
            vectorized=drift_eps_deriv is None or isinstance(drift_eps_deriv, PolynomialField),
            name=name,
        )

    def with_fields(self, **changes: Any) -> "ModelSpec":
        """Return a copy with some constructor fields replaced."""
        params = {
            name: getattr(self, name)
            for name in self.__dataclass_fields__
            if self.__dataclass_fields__[name].init
        }
        params.update(changes)
        return ModelSpec(**params)

    # ------------------------------------------------------------------
    # field evaluation

    def eps_drift_at(self, x: np.ndarray) -> np.ndarray:
        if self.drift_eps_deriv is None:
            return np.zeros(np.shape(x))
        return np.asarray(self.drift_eps_deriv(x), dtype=float)

    def drift_jacobian_at(self, x: np.ndarray) -> np.ndarray:
        if self.drift_jacobian is not None and not self.finite_difference:
            return np.asarray(self.drift_jacobian(x), dtype=float)
        return central_difference(self.drift, x, self.fd_step)

    def diffusion_jacobian_at(self, x: np.ndarray) -> np.ndarray:
        if self.diffusion_jacobian is not None and not self.finite_difference:
            return np.asarray(self.diffusion_jacobian(x), dtype=float)
        return central_difference(self.diffusion, x, self.fd_step)

    def drift_hessian_at(self, x: np.ndarray) -> np.ndarray:
        if self.drift_hessian is not None and not self.finite_difference:
            return np.asarray(self.drift_hessian(x), dtype=float)
        return self._hessian_fallback(self.drift_jacobian, self.drift_jacobian_at, x)

    def diffusion_hessian_at(self, x: np.ndarray) -> np.ndarray:
        if self.diffusion_hessian is not None and not self.finite_difference:
            return np.asarray(self.diffusion_hessian(x), dtype=float)
        return self._hessian_fallback(
            self.diffusion_jacobian, self.diffusion_jacobian_at, x
        )

    def decorrelated_at(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.diffusion(x), dtype=float) @ self.factor

    def decorrelated_jacobian_at(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("knj,ni->kij", self.diffusion_jacobian_at(x), self.factor)

    def decorrelated_hessian_at(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("knjl,ni->kijl", self.diffusion_hessian_at(x), self.factor)

    def _hessian_fallback(
        self,
        analytic: Optional[DerivativeField],
        jacobian_at: Callable[[np.ndarray], np.ndarray],
        x: np.ndarray,
    ) -> np.ndarray:
        # nested central differences need a coarser step
        has_exact_jacobian = analytic is not None and not self.finite_difference
        step = self.fd_step if has_exact_jacobian else HESSIAN_FD_STEP
        return central_difference(jacobian_at, x, step)

    def _sample_points(self) -> Sequence[np.ndarray]:
        d = self.dim_state
        signs = np.array([(-1.0) ** k for k in range(d)])
        return [self.x0, self.x0 + 0.37 * signs, self.x0 - 0.61 * np.roll(signs, 1)]

    def _validate_jacobians(self) -> None:
        checks = (
            ("drift", self.drift_jacobian, self.drift),
            ("diffusion", self.diffusion_jacobian, self.diffusion),
        )
        for label, jacobian, fn in checks:
            if jacobian is None:
                continue
            for x in self._sample_points():
                exact = np.asarray(jacobian(x), dtype=float)
                approx = central_difference(fn, x, self.fd_step)
                if exact.shape != approx.shape:
                    raise ModelSpecError(
                        f"{label} Jacobian has shape {exact.shape}, expected {approx.shape}"
                    )
                scale = 1.0 + float(np.max(np.abs(approx), initial=0.0))
                err = float(np.max(np.abs(exact - approx), initial=0.0))
                if err > JACOBIAN_CHECK_RTOL * scale:
                    raise ModelSpecError(
                        f"{label} Jacobian disagrees with finite differences at "
                        f"x={x.tolist()} (error {err:.3e})"
                    )


def central_difference(
    fn: Callable[[np.ndarray], Any], x: np.ndarray, rel_step: float
) -> np.ndarray:
    """Central-difference derivative of ``fn`` at ``x``.

    The differentiated axis is appended last. Steps are
    ``rel_step * max(1, |x_j|)`` per coordinate.
    """
    x = np.asarray(x, dtype=float)
    base = np.asarray(fn(x), dtype=float)
    out = np.empty(base.shape + (x.size,))
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        up, down = x.copy(), x.copy()
        up[j] += h
        down[j] -= h
        out[..., j] = (np.asarray(fn(up)) - np.asarray(fn(down))) / (2.0 * h)
    return out


def correlation_factor(omega: np.ndarray) -> np.ndarray:
    """Return ``F`` with ``F @ F.T == omega``.

    Lower-triangular Cholesky factor when ``omega`` is positive definite,
    otherwise a pivoted Cholesky factor with the columns beyond the numerical
    rank set to zero.
    """
    omega = np.asarray(omega, dtype=float)
    if not np.allclose(omega, omega.T, atol=PSD_TOLERANCE, rtol=0.0):
        raise InvalidCorrelationError("Correlation matrix is not symmetric")
    if not np.allclose(np.diag(omega), 1.0, atol=PSD_TOLERANCE, rtol=0.0):
        raise InvalidCorrelationError("Correlation matrix must have unit diagonal")
    smallest = float(np.linalg.eigvalsh(omega)[0])
    if smallest < -PSD_TOLERANCE:
        raise InvalidCorrelationError(
            f"Correlation matrix has negative eigenvalue {smallest:.3e}",
        )

    try:
        return np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        logger.debug("Correlation matrix is singular; using pivoted Cholesky")

    c, piv, rank, info = lapack.dpstrf(omega, lower=1)
    if info < 0:
        raise InvalidCorrelationError(f"Pivoted Cholesky failed (info={info})")
    lower = np.tril(c)
    lower[:, rank:] = 0.0
    factor = np.zeros_like(lower)
    factor[piv - 1, :] = lower
    return factor


def _check_point(model: ModelSpec, x: Any, p: Any) -> tuple:
    xa = np.asarray(x, dtype=float)
    pa = np.asarray(p, dtype=float)
    d = model.dim_state
    if xa.shape != (d,) or pa.shape != (d,):
        raise ContractViolationError(
            f"Expected x and p of shape ({d},), got {xa.shape} and {pa.shape}"
        )
    return xa, pa


def hamiltonian(model: ModelSpec, x: Any, p: Any) -> float:
    """H(x, p) = <p, sigma0(x)> + 1/2 <p, sigma Omega sigma^T p>."""
    xa, pa = _check_point(model, x, p)
    u = model.decorrelated_at(xa).T @ pa
    return float(pa @ np.asarray(model.drift(xa)) + 0.5 * (u @ u))


def decorrelated_diffusion(model: ModelSpec, x: Any) -> np.ndarray:
    """Diffusion realized on independent noise, ``sigma(x) @ L``."""
    xa = np.asarray(x, dtype=float)
    if xa.shape != (model.dim_state,):
        raise ContractViolationError(
            f"Expected x of shape ({model.dim_state},), got {xa.shape}"
        )
    return model.decorrelated_at(xa)


def hamiltonian_vector_field(model: ModelSpec, state: HamiltonianState) -> tuple:
    """Return ``(dH/dp, -dH/dx)`` at ``state``."""
    x, p = _check_point(model, state.x, state.p)
    return vector_field_at(model, x, p)


def vector_field_at(model: ModelSpec, x: np.ndarray, p: np.ndarray) -> tuple:
    """Unchecked ``(dH/dp, -dH/dx)`` for validated arrays."""
    sig = model.decorrelated_at(x)
    u = sig.T @ p
    g = np.einsum("kij,k->ij", model.decorrelated_jacobian_at(x), p)
    dx = np.asarray(model.drift(x), dtype=float) + sig @ u
    dp = -(model.drift_jacobian_at(x).T @ p + g.T @ u)
    return dx, dp


def hamiltonian_jacobian(model: ModelSpec, x: np.ndarray, p: np.ndarray) -> tuple:
    """Vector field and its Jacobian with respect to ``(x, p)``.

    Returns ``(dx, dp, DF)`` where ``DF`` is the ``2d x 2d`` matrix of the
    linearized Hamiltonian vector field.
    """
    d = model.dim_state
    sig = model.decorrelated_at(x)
    dsig = model.decorrelated_jacobian_at(x)
    jac0 = model.drift_jacobian_at(x)
    u = sig.T @ p
    g = np.einsum("kij,k->ij", dsig, p)

    dx = np.asarray(model.drift(x), dtype=float) + sig @ u
    dp = -(jac0.T @ p + g.T @ u)

    h_px = jac0 + np.einsum("kij,i->kj", dsig, u) + sig @ g
    h_pp = sig @ sig.T
    h_xx = (
        np.einsum("kjl,k->jl", model.drift_hessian_at(x), p)
        + g.T @ g
        + np.einsum("kijl,k,i->jl", model.decorrelated_hessian_at(x), p, u)
    )

    jac = np.empty((2 * d, 2 * d))
    jac[:d, :d] = h_px
    jac[:d, d:] = h_pp
    jac[d:, :d] = -h_xx
    jac[d:, d:] = -h_px.T
    return dx, dp, jac


def hamiltonian_along(model: ModelSpec, xs: np.ndarray, ps: np.ndarray) -> np.ndarray:
    """Hamiltonian evaluated at every row of ``xs``/``ps``."""
    if model.vectorized:
        drift = np.asarray(model.drift(xs))
        sig = np.asarray(model.diffusion(xs)) @ model.factor
        u = np.einsum("nki,nk->ni", sig, ps)
        return np.einsum("nk,nk->n", ps, drift) + 0.5 * np.einsum("ni,ni->n", u, u)
    return np.array([hamiltonian(model, x, p) for x, p in zip(xs, ps)])
