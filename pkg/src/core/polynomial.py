"""Multivariate polynomial vector and matrix fields.

A field is a fixed-shape array of scalar polynomials in ``dim`` variables.
Values, Jacobians and Hessians are exact and accept batched points of shape
``(..., dim)``. This is also the serializable model format accepted in run
configuration files.
"""

from math import prod
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.core.errors import ModelSpecError

MAX_DEGREE = 4

Term = Tuple[Tuple[int, ...], float]
Polynomial = List[Term]


class PolynomialTerm(BaseModel):
    """One monomial ``coeff * x_1^e_1 ... x_d^e_d``."""

    exponents: List[int] = Field(..., description="Exponent per state coordinate")
    coeff: float = Field(..., description="Coefficient")


# A vector field is a list of components, a matrix field a list of rows of
# components; every component is a list of terms.
VectorDescription = List[List[PolynomialTerm]]
MatrixDescription = List[List[List[PolynomialTerm]]]


def _differentiate(poly: Sequence[Term], axis: int) -> Polynomial:
    out: Polynomial = []
    for exps, coeff in poly:
        power = exps[axis]
        if power == 0:
            continue
        lowered = list(exps)
        lowered[axis] -= 1
        out.append((tuple(lowered), coeff * power))
    return out


class _StackedPolynomials:
    """Evaluates many scalar polynomials at once via one monomial table."""

    def __init__(self, polys: Sequence[Sequence[Term]], dim: int) -> None:
        rows = [(k, exps, c) for k, poly in enumerate(polys) for exps, c in poly]
        self.n_out = len(polys)
        self.exponents = np.zeros((len(rows), dim), dtype=np.int64)
        self.weights = np.zeros((len(rows), self.n_out))
        for i, (k, exps, coeff) in enumerate(rows):
            self.exponents[i] = exps
            self.weights[i, k] = coeff

    def __call__(self, x: np.ndarray) -> np.ndarray:
        powers = np.prod(x[..., None, :] ** self.exponents, axis=-1)
        return powers @ self.weights


class PolynomialField:
    """Array-valued polynomial field with exact derivatives.

    Attributes:
        shape: Output shape, ``(d,)`` for vector fields or ``(d, m)`` for matrix fields
        dim: Number of input variables
    """

    def __init__(
        self, components: Sequence[Sequence[Term]], shape: Tuple[int, ...], dim: int
    ) -> None:
        if len(components) != prod(shape):
            raise ModelSpecError(
                f"Expected {prod(shape)} polynomial components, got {len(components)}"
            )
        cleaned: List[Polynomial] = []
        for poly in components:
            terms: Polynomial = []
            for exps, coeff in poly:
                exps = tuple(int(e) for e in exps)
                if len(exps) != dim:
                    raise ModelSpecError(
                        f"Monomial {exps} has {len(exps)} exponents, expected {dim}"
                    )
                if any(e < 0 for e in exps):
                    raise ModelSpecError(f"Negative exponent in monomial {exps}")
                if sum(exps) > MAX_DEGREE:
                    raise ModelSpecError(
                        f"Monomial {exps} exceeds total degree {MAX_DEGREE}"
                    )
                if coeff != 0.0:
                    terms.append((exps, float(coeff)))
            cleaned.append(terms)

        self.shape = tuple(shape)
        self.dim = dim
        self._components = cleaned
        self._value = _StackedPolynomials(cleaned, dim)
        first = [_differentiate(p, j) for p in cleaned for j in range(dim)]
        self._jacobian = _StackedPolynomials(first, dim)
        second = [_differentiate(p, k) for p in first for k in range(dim)]
        self._hessian = _StackedPolynomials(second, dim)

    def __call__(self, x: Any) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        return self._value(pts).reshape(pts.shape[:-1] + self.shape)

    def jacobian(self, x: Any) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        return self._jacobian(pts).reshape(pts.shape[:-1] + self.shape + (self.dim,))

    def hessian(self, x: Any) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        return self._hessian(pts).reshape(
            pts.shape[:-1] + self.shape + (self.dim, self.dim)
        )

    @property
    def degree(self) -> int:
        degrees = [sum(exps) for poly in self._components for exps, _ in poly]
        return max(degrees, default=0)

    @classmethod
    def zeros(cls, shape: Tuple[int, ...], dim: int) -> "PolynomialField":
        return cls([[] for _ in range(prod(shape))], shape, dim)

    @classmethod
    def vector(cls, description: Sequence[Sequence[Any]], dim: int) -> "PolynomialField":
        """Build a vector field from a list of components."""
        comps = [_parse_component(c) for c in description]
        return cls(comps, (len(comps),), dim)

    @classmethod
    def matrix(
        cls,
        description: Sequence[Sequence[Sequence[Any]]],
        dim: int,
        n_cols: Optional[int] = None,
    ) -> "PolynomialField":
        """Build a matrix field from a list of rows of components."""
        if not description:
            raise ModelSpecError("Matrix field needs at least one row")
        width = n_cols if n_cols is not None else len(description[0])
        comps: List[Polynomial] = []
        for row in description:
            if len(row) != width:
                raise ModelSpecError(
                    f"Ragged matrix field: row of length {len(row)}, expected {width}"
                )
            comps.extend(_parse_component(c) for c in row)
        return cls(comps, (len(description), width), dim)

    def to_description(self) -> Any:
        flat = [
            [{"exponents": list(exps), "coeff": coeff} for exps, coeff in poly]
            for poly in self._components
        ]
        if len(self.shape) == 1:
            return flat
        rows, cols = self.shape
        return [flat[r * cols : (r + 1) * cols] for r in range(rows)]


def _parse_component(component: Sequence[Any]) -> Polynomial:
    terms: Polynomial = []
    for raw in component:
        if isinstance(raw, PolynomialTerm):
            term = raw
        elif isinstance(raw, dict):
            term = PolynomialTerm.model_validate(raw)
        else:
            exps, coeff = raw
            term = PolynomialTerm(exponents=list(exps), coeff=coeff)
        terms.append((tuple(term.exponents), term.coeff))
    return terms


def monomial(dim: int, coeff: float, **powers: int) -> Term:
    """Shorthand term builder using ``x0``, ``x1``, ... keyword exponents.

    ``monomial(2, -0.5, x1=2)`` is ``-0.5 * x_1^2`` in two variables.
    """
    exps = [0] * dim
    for name, power in powers.items():
        exps[int(name.lstrip("x"))] = power
    return (tuple(exps), coeff)

