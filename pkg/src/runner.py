"""Run configurations and command dispatch.

Every command has its own pydantic model tagged by ``command``; the union is
parsed with a ``TypeAdapter`` so unknown commands and schema violations fail
before any computation starts.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Mapping, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

from src.catalog.black_scholes import BlackScholesParams, black_scholes_constants
from src.catalog.registry import CatalogEntry, default_registry
from src.catalog.stein_stein import SteinSteinParams, solve_correlated
from src.core.artifact_manager import ArtifactManager
from src.core.config import McConfig, SolverSettings, TailSlopeOptions
from src.core.errors import ConfigError, ContractViolationError
from src.core.expansion import (
    implied_vol_wing,
    short_time_expansion,
    small_noise_expansion,
    tail_expansion,
    wing_curve,
    wing_inputs,
)
from src.core.model import ModelSpec
from src.core.nonfocal import sweep_nonfocality, sweep_table
from src.core.polynomial import PolynomialField, PolynomialTerm
from src.core.shooting import BvpProblem
from src.mc.prefactor import fit_prefactor
from src.mc.simulate import simulate_terminal
from src.mc.tail_slope import tail_slope


logger = logging.getLogger(__name__)

Component = List[PolynomialTerm]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# model descriptions


class PolynomialModelDescription(_Strict):
    """Model with polynomial coefficient fields.

    Components are lists of ``{"exponents": [...], "coeff": ...}`` terms.
    """

    dim_state: int = Field(..., ge=1, description="State dimension d")
    dim_proj: int = Field(1, ge=1, description="Projection dimension l")
    drift: List[Component] = Field(..., description="d components of sigma_0")
    diffusion: List[List[Component]] = Field(..., description="d rows of m components")
    drift_eps_deriv: Optional[List[Component]] = Field(
        None, description="d components of the first-order drift correction"
    )
    correlation: Optional[List[List[float]]] = Field(
        None, description="m x m correlation matrix, identity when omitted"
    )
    x0: List[float] = Field(..., description="Start point")
    x0_hat: Optional[List[float]] = Field(None, description="First-order start shift")
    T: float = Field(1.0, gt=0, description="Maturity")
    name: str = "polynomial"

    def build(self) -> ModelSpec:
        d = self.dim_state
        diffusion = PolynomialField.matrix(self.diffusion, d)
        m = diffusion.shape[1]
        return ModelSpec.from_polynomials(
            drift=PolynomialField.vector(self.drift, d),
            diffusion=diffusion,
            correlation=self.correlation if self.correlation is not None else np.eye(m),
            x0=self.x0,
            x0_hat=self.x0_hat if self.x0_hat is not None else [0.0] * d,
            dim_proj=self.dim_proj,
            drift_eps_deriv=(
                PolynomialField.vector(self.drift_eps_deriv, d)
                if self.drift_eps_deriv is not None
                else None
            ),
            name=self.name,
        )


class CatalogModel(_Strict):
    catalog: Literal["stein_stein", "black_scholes"]
    params: Dict[str, float] = Field(default_factory=dict)


class PolynomialModel(_Strict):
    polynomial: PolynomialModelDescription


ModelConfig = Union[CatalogModel, PolynomialModel]


@dataclass(frozen=True)
class ResolvedModel:
    """A model configuration turned into the objects the solvers take."""

    model: ModelSpec
    T: float
    entry: Optional[CatalogEntry] = None
    params: Any = None

    def problem(self, target: List[float]) -> BvpProblem:
        if self.entry is not None:
            if len(target) != 1:
                raise ContractViolationError("Catalog models project to one coordinate")
            return self.entry.build_problem(self.params, target[0])
        return BvpProblem(model=self.model, target=np.asarray(target, dtype=float), T=self.T)

    @property
    def theta(self) -> Optional[int]:
        return self.entry.theta if self.entry is not None else None


def resolve_model(config: ModelConfig) -> ResolvedModel:
    if isinstance(config, CatalogModel):
        entry = default_registry().get(config.catalog)
        params = entry.parse_params(config.params)
        return ResolvedModel(
            model=entry.build_model(params), T=params.T, entry=entry, params=params
        )
    description = config.polynomial
    return ResolvedModel(model=description.build(), T=description.T)


# ---------------------------------------------------------------------------
# per-command configurations


class OutputConfig(_Strict):
    path: Optional[str] = Field(None, description="Main output file; stdout only when unset")
    format: Literal["json", "csv"] = Field("json", description="Main output format")


class CurveGrid(_Strict):
    start: float = Field(..., description="First abscissa")
    stop: float = Field(..., description="Last abscissa")
    n_points: int = Field(50, ge=2, description="Number of grid points")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.n_points)


class _Command(_Strict):
    output: OutputConfig = Field(default_factory=OutputConfig)


class ExpandConfig(_Command):
    command: Literal["expand"]
    model: ModelConfig
    target: List[float] = Field(default_factory=lambda: [1.0])
    solver: SolverSettings = Field(default_factory=SolverSettings)


class TailConfig(_Command):
    command: Literal["tail"]
    model: ModelConfig
    theta: Optional[Literal[1, 2]] = None
    solver: SolverSettings = Field(default_factory=SolverSettings)
    curve: Optional[CurveGrid] = Field(
        None, description="Grid in y for the leading log-density curve"
    )


class ShortTimeConfig(_Command):
    command: Literal["shorttime"]
    model: ModelConfig
    target: List[float] = Field(default_factory=lambda: [1.0])
    solver: SolverSettings = Field(default_factory=SolverSettings)


class SteinSteinConfig(_Command):
    command: Literal["steinstein"]
    params: Dict[str, float] = Field(default_factory=dict)
    n_branches: int = Field(3, ge=1, description="Number of root branches to report")


class BlackScholesConfig(_Command):
    command: Literal["blackscholes"]
    params: Dict[str, float] = Field(default_factory=dict)


class McRunConfig(_Command):
    command: Literal["mc"]
    model: ModelConfig
    T: Optional[float] = Field(None, gt=0, description="Maturity override")
    eps: float = Field(1.0, ge=0, description="Noise level for polynomial models")
    mc: McConfig = Field(default_factory=McConfig)
    tail: TailSlopeOptions = Field(default_factory=TailSlopeOptions)
    prefactor: bool = Field(False, description="Also estimate c0 for catalog models")
    samples_path: Optional[str] = Field(None, description="Binary sample file")


class SmileConfig(_Command):
    command: Literal["smile"]
    B1: Optional[float] = None
    B2: Optional[float] = None
    model: Optional[ModelConfig] = None
    solver: SolverSettings = Field(default_factory=SolverSettings)
    k_max: float = Field(5.0, gt=0, description="Largest log-strike of the curve")
    n_points: int = Field(51, ge=2)


class SweepConfig(_Command):
    command: Literal["sweep"]
    catalog: Literal["stein_stein", "black_scholes"]
    params: Dict[str, float] = Field(default_factory=dict)
    grid: Dict[str, List[float]] = Field(..., description="Values per swept parameter")
    target: float = 1.0
    solver: SolverSettings = Field(default_factory=SolverSettings)


RunConfig = Annotated[
    Union[
        ExpandConfig,
        TailConfig,
        ShortTimeConfig,
        SteinSteinConfig,
        BlackScholesConfig,
        McRunConfig,
        SmileConfig,
        SweepConfig,
    ],
    Field(discriminator="command"),
]

_ADAPTER: TypeAdapter[Any] = TypeAdapter(RunConfig)

COMMANDS = (
    "expand",
    "tail",
    "shorttime",
    "steinstein",
    "blackscholes",
    "mc",
    "smile",
    "sweep",
)


def parse_config(raw: Mapping[str, Any]) -> Any:
    """Validate a raw mapping into the command's configuration.

    Raises:
        ConfigError: If the command is missing or unknown
        ValidationError: If the mapping violates the command's schema
    """
    command = raw.get("command")
    if command not in COMMANDS:
        raise ConfigError(
            f"Unknown command {command!r}", known=list(COMMANDS)
        )
    return _ADAPTER.validate_python(dict(raw))


def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON configuration file into a raw mapping."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read configuration {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("Configuration must be a JSON object")
    return raw


# ---------------------------------------------------------------------------
# dispatch


@dataclass
class RunOutcome:
    """Result payload of one command plus the files it wrote."""

    command: str
    payload: Dict[str, Any]
    table: Optional[pd.DataFrame] = None
    artifacts: List[Path] = field(default_factory=list)


def _expand(config: ExpandConfig, n_jobs: Optional[int]) -> RunOutcome:
    resolved = resolve_model(config.model)
    settings = config.solver.with_workers(n_jobs)
    result = small_noise_expansion(resolved.problem(config.target), settings)
    return RunOutcome("expand", result.to_dict())


def _tail(config: TailConfig, n_jobs: Optional[int]) -> RunOutcome:
    resolved = resolve_model(config.model)
    theta = config.theta or resolved.theta
    if theta is None:
        raise ContractViolationError("Tail expansion of a polynomial model needs theta")
    settings = config.solver.with_workers(n_jobs)
    result = tail_expansion(resolved.problem([1.0]), theta, settings)
    payload = result.to_dict()
    table = None
    if config.curve is not None:
        y = config.curve.values()
        table = pd.DataFrame({"y": y, "log_f_leading": result.leading_log_density(y)})
    return RunOutcome("tail", payload, table)


def _shorttime(config: ShortTimeConfig, n_jobs: Optional[int]) -> RunOutcome:
    resolved = resolve_model(config.model)
    settings = config.solver.with_workers(n_jobs)
    result = short_time_expansion(resolved.model, config.target, settings)
    return RunOutcome("shorttime", result.to_dict())


def _steinstein(config: SteinSteinConfig) -> RunOutcome:
    params = SteinSteinParams.model_validate(config.params)
    payload = solve_correlated(params, n_branches=config.n_branches).to_dict()
    return RunOutcome("steinstein", {"params": params.model_dump(), **payload})


def _blackscholes(config: BlackScholesConfig) -> RunOutcome:
    params = BlackScholesParams.model_validate(config.params)
    constants = black_scholes_constants(params.sigma, params.T, params.y0)
    return RunOutcome("blackscholes", {"params": params.model_dump(), **constants.to_dict()})


def _mc(config: McRunConfig, n_jobs: Optional[int], manager: ArtifactManager) -> RunOutcome:
    resolved = resolve_model(config.model)
    source = resolved.params if resolved.entry is not None else resolved.model
    T = config.T if config.T is not None else resolved.T
    samples = simulate_terminal(source, config.mc, T=T, eps=config.eps, n_jobs=n_jobs)
    opts = config.tail
    if resolved.entry is not None and "theta" not in opts.model_fields_set:
        opts = opts.model_copy(update={"theta": resolved.entry.theta})
    estimate = tail_slope(samples, opts)
    payload: Dict[str, Any] = {
        "n_paths": config.mc.n_paths,
        "n_steps": config.mc.n_steps,
        "seed": config.mc.seed,
        "tail_slope": estimate.to_dict(),
    }
    if resolved.entry is not None:
        closed = resolved.entry.closed_form(resolved.params)
        payload["c1_closed_form"] = closed["c1"]
        if config.prefactor:
            fit = fit_prefactor(
                samples,
                closed["c1"],
                closed["c2"],
                resolved.entry.theta,
                opts.quantile_range,
            )
            payload["prefactor"] = fit.to_dict()
    outcome = RunOutcome("mc", payload, pd.DataFrame({"y": samples}))
    if config.samples_path is not None:
        outcome.artifacts.append(manager.save_samples(config.samples_path, samples))
    return outcome


def _smile(config: SmileConfig, n_jobs: Optional[int]) -> RunOutcome:
    if config.B1 is not None:
        B1, B2 = config.B1, config.B2 or 0.0
    elif config.model is not None:
        resolved = resolve_model(config.model)
        settings = config.solver.with_workers(n_jobs)
        B1, B2 = wing_inputs(tail_expansion(resolved.problem([1.0]), 2, settings))
    else:
        raise ContractViolationError("smile needs either B1 (and B2) or a model")
    beta1, beta2 = implied_vol_wing(B1, B2)
    k = np.linspace(0.0, config.k_max, config.n_points)
    table = pd.DataFrame({"k": k, "total_variance": wing_curve(beta1, beta2, k)})
    payload = {"B1": B1, "B2": B2, "beta1": beta1, "beta2": beta2}
    return RunOutcome("smile", payload, table)


class CatalogCells:
    """Problem builder over a catalog parameter grid."""

    def __init__(self, entry: CatalogEntry, base: Mapping[str, float], target: float) -> None:
        self.entry = entry
        self.base = dict(base)
        self.target = target

    def _params(self, cell: Mapping[str, Any]) -> Any:
        return self.entry.parse_params({**self.base, **cell})

    def problem(self, cell: Mapping[str, Any]) -> BvpProblem:
        return self.entry.build_problem(self._params(cell), self.target)


def grid_cells(grid: Mapping[str, List[float]]) -> List[Dict[str, float]]:
    names = list(grid)
    return [dict(zip(names, combo)) for combo in itertools.product(*grid.values())]


def _sweep(config: SweepConfig, n_jobs: Optional[int]) -> RunOutcome:
    cells = CatalogCells(default_registry().get(config.catalog), config.params, config.target)
    rows = sweep_nonfocality(
        grid_cells(config.grid), cells.problem, config.solver, n_jobs
    )
    table = sweep_table(rows)
    counts = table["verdict"].value_counts().to_dict() if len(table) else {}
    payload = {"catalog": config.catalog, "n_cells": len(rows), "verdicts": counts}
    return RunOutcome("sweep", payload, table)


def run(
    config: Any,
    n_jobs: Optional[int] = None,
    manager: Optional[ArtifactManager] = None,
) -> RunOutcome:
    """Execute one validated configuration and write its outputs.

    The main output goes to ``config.output.path`` as JSON, or as CSV when
    ``format`` is ``csv`` and the command produces a table. A table next to
    a JSON main output is written with the same stem and a ``.csv`` suffix.
    """
    manager = manager or ArtifactManager()
    logger.info(f"Running command '{config.command}'")
    if isinstance(config, ExpandConfig):
        outcome = _expand(config, n_jobs)
    elif isinstance(config, TailConfig):
        outcome = _tail(config, n_jobs)
    elif isinstance(config, ShortTimeConfig):
        outcome = _shorttime(config, n_jobs)
    elif isinstance(config, SteinSteinConfig):
        outcome = _steinstein(config)
    elif isinstance(config, BlackScholesConfig):
        outcome = _blackscholes(config)
    elif isinstance(config, McRunConfig):
        outcome = _mc(config, n_jobs, manager)
    elif isinstance(config, SmileConfig):
        outcome = _smile(config, n_jobs)
    elif isinstance(config, SweepConfig):
        outcome = _sweep(config, n_jobs)
    else:
        raise ConfigError(f"Unsupported configuration type {type(config).__name__}")

    out = config.output
    if out.path is not None:
        path = Path(out.path)
        if out.format == "csv":
            if outcome.table is None:
                raise ContractViolationError(
                    f"Command '{outcome.command}' has no tabular output"
                )
            outcome.artifacts.append(manager.save_table(path, outcome.table))
        else:
            outcome.artifacts.append(manager.save_json(path, outcome.payload))
            if outcome.table is not None:
                outcome.artifacts.append(
                    manager.save_table(path.with_suffix(".csv"), outcome.table)
                )
    return outcome


__all__ = [
    "COMMANDS",
    "RunConfig",
    "RunOutcome",
    "load_config",
    "parse_config",
    "resolve_model",
    "run",
]
