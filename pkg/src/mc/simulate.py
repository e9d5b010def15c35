"""Euler-Maruyama simulation of terminal values.

Paths are split into blocks of ``block_size``. Block ``i`` draws from its own
Philox stream keyed by the seed with counter ``i << 192``, so the samples do
not depend on how blocks are scheduled over workers.
"""

import functools
import logging
import math
from typing import Optional, Union

import numpy as np

from src.catalog.black_scholes import BlackScholesParams
from src.catalog.stein_stein import SteinSteinParams
from src.core.config import McConfig
from src.core.errors import ContractViolationError
from src.core.model import ModelSpec
from src.core.parallel import ordered_map

logger = logging.getLogger(__name__)

Source = Union[SteinSteinParams, BlackScholesParams, ModelSpec]

COUNTER_SHIFT = 192


def block_generator(seed: int, block_index: int) -> np.random.Generator:
    """Independent generator for one block of paths."""
    return np.random.Generator(
        np.random.Philox(key=seed, counter=block_index << COUNTER_SHIFT)
    )


class _Increments:
    """Standard normal increments for a block, optionally antithetic."""

    def __init__(self, rng: np.random.Generator, size: int, antithetic: bool) -> None:
        self.rng = rng
        self.size = size
        self.antithetic = antithetic

    def draw(self, n_factors: int) -> np.ndarray:
        if not self.antithetic:
            return self.rng.standard_normal((self.size, n_factors))
        half = self.rng.standard_normal(((self.size + 1) // 2, n_factors))
        return np.concatenate([half, -half])[: self.size]


def _stein_stein_block(
    params: SteinSteinParams, T: float, cfg: McConfig, block: int, size: int
) -> np.ndarray:
    dt = T / cfg.n_steps
    sqdt = math.sqrt(dt)
    rho = params.rho
    sqrt_1mr2 = math.sqrt(1.0 - rho * rho)
    noise = _Increments(block_generator(cfg.seed, block), size, cfg.antithetic)

    y = np.zeros(size)
    z = np.full(size, params.sigma0)
    for _ in range(cfg.n_steps):
        g = noise.draw(2)
        dw1 = g[:, 0] * sqdt
        dw2 = (rho * g[:, 0] + sqrt_1mr2 * g[:, 1]) * sqdt
        y_next = y - 0.5 * z * z * dt + z * dw1
        z = z + (params.a + params.b * z) * dt + params.c * dw2
        y = y_next
    return y


def _black_scholes_block(
    params: BlackScholesParams, T: float, cfg: McConfig, block: int, size: int
) -> np.ndarray:
    dt = T / cfg.n_steps
    sqdt = math.sqrt(dt)
    noise = _Increments(block_generator(cfg.seed, block), size, cfg.antithetic)

    y = np.full(size, params.y0)
    for _ in range(cfg.n_steps):
        g = noise.draw(1)[:, 0]
        y = y - 0.5 * params.sigma**2 * dt + params.sigma * g * sqdt
    return y


def _evaluate_rows(fn: object, x: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        return np.asarray(fn(x), dtype=float)  # type: ignore[operator]
    return np.array([fn(row) for row in x], dtype=float)  # type: ignore[operator]


def _model_block(
    model: ModelSpec, eps: float, T: float, cfg: McConfig, block: int, size: int
) -> np.ndarray:
    dt = T / cfg.n_steps
    sqdt = math.sqrt(dt)
    noise = _Increments(block_generator(cfg.seed, block), size, cfg.antithetic)

    x = np.tile(model.x0 + eps * model.x0_hat, (size, 1))
    for _ in range(cfg.n_steps):
        dw = noise.draw(model.dim_noise) @ model.factor.T * sqdt
        drift = _evaluate_rows(model.drift, x, model.vectorized)
        drift = drift + eps * _evaluate_rows(model.eps_drift_at, x, model.vectorized)
        sigma = _evaluate_rows(model.diffusion, x, model.vectorized)
        x = x + drift * dt + eps * np.einsum("nij,nj->ni", sigma, dw)
    return x[:, : model.dim_proj]


def _simulate_block(
    source: Source, T: float, eps: float, cfg: McConfig, bounds: tuple
) -> np.ndarray:
    block, size = bounds
    if isinstance(source, SteinSteinParams):
        return _stein_stein_block(source, T, cfg, block, size)
    if isinstance(source, BlackScholesParams):
        return _black_scholes_block(source, T, cfg, block, size)
    return _model_block(source, eps, T, cfg, block, size)


def simulate_terminal(
    source: Source,
    cfg: McConfig,
    T: Optional[float] = None,
    eps: float = 1.0,
    n_jobs: Optional[int] = None,
) -> np.ndarray:
    """Simulate the projected terminal value for every path.

    Args:
        source: Catalog parameters, simulated as the original SDE, or a
            model specification simulated at noise level ``eps``
        cfg: Path count, step count, seed and scheme
        T: Maturity; defaults to the catalog maturity
        eps: Noise level for model specifications
        n_jobs: Worker cap for the blocks

    Returns:
        Terminal samples, shape ``(n_paths,)`` for ``l = 1`` and
        ``(n_paths, l)`` otherwise

    Raises:
        ContractViolationError: If no maturity is available or it is not positive
    """
    if T is None:
        if isinstance(source, ModelSpec):
            raise ContractViolationError("Simulating a model specification needs T")
        T = source.T
    if not T > 0:
        raise ContractViolationError(f"Maturity must be positive, got {T}")
    if isinstance(source, ModelSpec) and eps < 0:
        raise ContractViolationError(f"Noise level must be nonnegative, got {eps}")

    blocks = []
    remaining, index = cfg.n_paths, 0
    while remaining > 0:
        size = min(cfg.block_size, remaining)
        blocks.append((index, size))
        remaining -= size
        index += 1

    logger.info(
        f"Simulating {cfg.n_paths} paths x {cfg.n_steps} steps in {len(blocks)} blocks"
    )
    work = functools.partial(_simulate_block, source, T, eps, cfg)
    parts = ordered_map(work, blocks, n_jobs=n_jobs)
    samples = np.concatenate(parts, axis=0)
    if samples.ndim == 2 and samples.shape[1] == 1:
        samples = samples[:, 0]
    return samples
