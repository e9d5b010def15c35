"""Configuration objects for the numerical engine.

All option sets are pydantic models so they can be embedded in run
configuration files and validated before any computation starts.
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class IntegratorOptions(BaseModel):
    """Options for the adaptive Runge-Kutta integrator."""

    model_config = ConfigDict(frozen=True)

    method: Literal["DOP853", "RK45"] = Field(
        "DOP853", description="Embedded Runge-Kutta pair used by solve_ivp"
    )
    rtol: float = Field(1e-10, gt=0, description="Relative tolerance")
    atol: float = Field(1e-12, gt=0, description="Absolute tolerance")
    n_report: int = Field(
        512, ge=3, description="Points on the uniform reporting grid"
    )
    hamiltonian_rel_tol: float = Field(
        1e-8, gt=0, description="Allowed drift of H relative to 1+|H(0)|"
    )
    fd_step: float = Field(
        1e-6, gt=0, description="Relative step for finite-difference derivatives"
    )

    def refined(self, factor: float = 100.0) -> "IntegratorOptions":
        """Return a copy with both tolerances tightened by ``factor``."""
        return self.model_copy(
            update={
                "rtol": max(self.rtol / factor, 2.5e-14),
                "atol": max(self.atol / factor, 1e-16),
            }
        )


class ShootingOptions(BaseModel):
    """Options for Newton shooting and multi-start enumeration."""

    model_config = ConfigDict(frozen=True)

    tol_bvp: float = Field(1e-9, gt=0, description="Residual norm tolerance")
    max_iterations: int = Field(50, ge=1, description="Newton iteration cap")
    max_halvings: int = Field(20, ge=0, description="Backtracking halvings per step")
    singular_tol: float = Field(
        1e-12, gt=0, description="Relative singular-value threshold of the Jacobian"
    )
    lattice_k: int = Field(32, ge=1, description="Lattice points per orthant")
    box_half_width: float = Field(
        20.0, gt=0, description="Half width of the start box, divided by T"
    )
    seeds: List[List[float]] = Field(
        default_factory=list, description="Extra user-supplied initial momenta"
    )
    dedup_rel_tol: float = Field(
        1e-6, gt=0, description="Relative distance identifying two solutions"
    )
    n_jobs: Optional[int] = Field(
        None, ge=1, description="Worker cap; None resolves from the environment"
    )
    search_rtol: float = Field(
        1e-7, gt=0, description="Integrator tolerance while screening lattice starts"
    )
    search_tol: float = Field(
        1e-6, gt=0, description="Residual norm at which a screened start is polished"
    )
    search_max_iterations: int = Field(
        30, ge=1, description="Newton iteration cap while screening"
    )
    stall_iterations: int = Field(
        8,
        ge=1,
        description="Screening drops a start whose residual has not halved over "
        "this many Newton steps",
    )
    box_growth: float = Field(
        2.0, gt=1, description="Factor applied to the box when no start converges"
    )
    max_box_growths: int = Field(
        3, ge=0, description="How often the box may grow before giving up"
    )


class FocalityOptions(BaseModel):
    """Options for the non-focality check."""

    model_config = ConfigDict(frozen=True)

    tol_focal: float = Field(1e-8, gt=0, description="Normalized determinant threshold")
    method: Literal["variational", "finite_difference"] = Field(
        "variational", description="How the primary Jacobian is computed"
    )
    cross_check: bool = Field(
        False, description="Also compute the Jacobian by central differences"
    )
    fd_step: float = Field(1e-6, gt=0, description="Relative finite-difference step")


class ExpansionOptions(BaseModel):
    """Options for assembling expansion constants."""

    model_config = ConfigDict(frozen=True)

    minimizer_rel_tol: float = Field(
        1e-6, ge=0, description="Energy band identifying minimizers"
    )
    gradient_method: Literal["momentum", "finite_difference"] = Field(
        "momentum", description="Primary method for the rate-function gradient"
    )
    gradient_cross_check: bool = Field(
        True, description="Cross-check the gradient with the other method"
    )
    gradient_rel_tol: float = Field(
        1e-3, gt=0, description="Allowed disagreement of the two gradient methods"
    )
    scaling_targets: Tuple[float, ...] = Field(
        (0.25, 1.0, 4.0), description="Targets for the theta-scaling check"
    )
    scaling_tol: float = Field(1e-4, gt=0, description="Allowed scaling violation")
    continuation_factor: float = Field(
        1.25, gt=1, description="Multiplicative step when continuing in the target"
    )
    tie_rel_tol: float = Field(
        1e-10, ge=0, description="Relative gap under which c2 values are a tie"
    )


class McConfig(BaseModel):
    """Monte Carlo simulation settings."""

    model_config = ConfigDict(frozen=True)

    n_paths: int = Field(100_000, ge=1, description="Number of simulated paths")
    n_steps: int = Field(400, ge=1, description="Euler steps per path")
    seed: int = Field(0, ge=0, lt=2**64, description="Key of the counter-based PRNG")
    scheme: Literal["euler_maruyama"] = Field(
        "euler_maruyama", description="Time-stepping scheme"
    )
    antithetic: bool = Field(False, description="Pair each path with its mirror")
    block_size: int = Field(
        65_536, ge=2, description="Paths per independent random substream"
    )

    @field_validator("block_size")
    @classmethod
    def _even_block(cls, v: int) -> int:
        if v % 2:
            raise ValueError("block_size must be even")
        return v


class TailSlopeOptions(BaseModel):
    """Options for the empirical tail-rate regression."""

    model_config = ConfigDict(frozen=True)

    theta: Literal[1, 2] = Field(2, description="Declared tail scaling exponent")
    quantile_range: Tuple[float, float] = Field(
        (0.995, 0.99995), description="Quantile window used in the regression"
    )
    n_bootstrap: int = Field(200, ge=2, description="Bootstrap resamples")
    min_tail_points: int = Field(100, ge=2, description="Minimum points in the window")
    min_samples: int = Field(100_000, ge=1, description="Minimum sample count")
    prefactor_correction: bool = Field(
        False, description="Remove the y^(-1/theta) survival prefactor first"
    )
    bootstrap_seed: int = Field(0, ge=0, description="Seed of the bootstrap stream")

    @model_validator(mode="after")
    def _ordered_range(self) -> "TailSlopeOptions":
        lo, hi = self.quantile_range
        if not 0.0 < lo < hi < 1.0:
            raise ValueError("quantile_range must satisfy 0 < lo < hi < 1")
        return self


class SolverSettings(BaseModel):
    """All numerical options for one expansion run."""

    model_config = ConfigDict(frozen=True)

    integrator: IntegratorOptions = Field(default_factory=IntegratorOptions)
    shooting: ShootingOptions = Field(default_factory=ShootingOptions)
    focality: FocalityOptions = Field(default_factory=FocalityOptions)
    expansion: ExpansionOptions = Field(default_factory=ExpansionOptions)

    def with_workers(self, n_jobs: Optional[int]) -> "SolverSettings":
        """Copy with the shooting worker cap replaced."""
        shooting = self.shooting.model_copy(update={"n_jobs": n_jobs})
        return self.model_copy(update={"shooting": shooting})
