"""Registry of closed-form catalog models.

Each entry couples a parameter type with the builders the runner needs: the
small-noise model, the unit-target boundary problem and the closed-form
constants. Closed forms are references only; the numerical pipeline never
sees them.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional

from src.catalog import black_scholes, stein_stein
from src.core.errors import ConfigError
from src.core.model import ModelSpec
from src.core.shooting import BvpProblem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CatalogEntry:
    """Builders for one catalog model."""

    name: str
    theta: int
    parse_params: Callable[[Mapping[str, Any]], Any]
    build_model: Callable[[Any], ModelSpec]
    build_problem: Callable[[Any, float], BvpProblem]
    closed_form: Callable[[Any], Dict[str, Any]]

    def problem(self, values: Mapping[str, Any], target: float = 1.0) -> BvpProblem:
        return self.build_problem(self.parse_params(values), target)


class CatalogRegistry:
    """Maps catalog names to their entries."""

    def __init__(self) -> None:
        self._entries: Dict[str, CatalogEntry] = {}

    def register(self, entry: CatalogEntry) -> None:
        if entry.name in self._entries:
            raise ValueError(f"Catalog model '{entry.name}' is already registered")
        self._entries[entry.name] = entry
        logger.debug(f"Registered catalog model '{entry.name}'")

    def get(self, name: str) -> CatalogEntry:
        try:
            return self._entries[name]
        except KeyError:
            known = ", ".join(sorted(self._entries))
            raise ConfigError(
                f"Unknown catalog model '{name}' (known: {known})", known=self.names()
            ) from None

    def names(self) -> List[str]:
        return sorted(self._entries)

    def __contains__(self, name: object) -> bool:
        return name in self._entries


def _stein_stein_closed_form(params: stein_stein.SteinSteinParams) -> Dict[str, Any]:
    return stein_stein.solve_correlated(params).to_dict()


def _black_scholes_closed_form(params: black_scholes.BlackScholesParams) -> Dict[str, Any]:
    return black_scholes.black_scholes_constants(params.sigma, params.T, params.y0).to_dict()


_default: Optional[CatalogRegistry] = None


def default_registry() -> CatalogRegistry:
    """The process-wide registry holding the built-in models."""
    global _default
    if _default is None:
        registry = CatalogRegistry()
        registry.register(
            CatalogEntry(
                name="stein_stein",
                theta=2,
                parse_params=stein_stein.SteinSteinParams.model_validate,
                build_model=stein_stein.stein_stein_model,
                build_problem=stein_stein.tail_problem,
                closed_form=_stein_stein_closed_form,
            )
        )
        registry.register(
            CatalogEntry(
                name="black_scholes",
                theta=1,
                parse_params=black_scholes.BlackScholesParams.model_validate,
                build_model=black_scholes.black_scholes_model,
                build_problem=black_scholes.tail_problem,
                closed_form=_black_scholes_closed_form,
            )
        )
        _default = registry
    return _default
