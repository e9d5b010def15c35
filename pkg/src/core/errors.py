"""Exception hierarchy for hamexpand.

Every error carries a ``to_dict()`` payload that the CLI writes to stderr as
diagnostic JSON. Errors that mean "the caller asked for something invalid"
derive from :class:`ContractViolationError` (exit status 2); everything that
means "the numerics did not work out" derives from :class:`NumericalError`
or :class:`DomainError` (exit status 3).
"""

from typing import Any, Dict, Optional


class HamExpandError(Exception):
    """Base class for all hamexpand errors."""

    def __init__(self, message: str, **details: Any) -> None:
        self.message = message
        self.details = details
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "error": type(self).__name__,
            "message": self.message,
        }
        payload.update({k: _jsonable(v) for k, v in self.details.items()})
        return payload


class ConfigError(HamExpandError):
    """Run configuration could not be parsed or validated."""


class ContractViolationError(HamExpandError, ValueError):
    """A precondition of an operation does not hold."""


class ModelSpecError(ContractViolationError):
    """A model specification is inconsistent."""


class InvalidCorrelationError(ModelSpecError):
    """The correlation matrix is not a valid correlation matrix."""


class ParameterError(ContractViolationError):
    """Model parameters violate their sign constraints."""


class UnsupportedParameterError(ParameterError):
    """Parameters are valid in principle but outside the supported range."""


class NumericalError(HamExpandError):
    """Base class for numerical failures."""


class IntegrationError(NumericalError):
    """The ODE integrator failed before reaching the final time."""

    def __init__(self, message: str, last_valid_time: float) -> None:
        super().__init__(message, last_valid_time=last_valid_time)
        self.last_valid_time = last_valid_time


class ShootingError(NumericalError):
    """Newton shooting failed for a single start."""

    def __init__(self, message: str, last_residual: float, iterations: int) -> None:
        super().__init__(message, last_residual=last_residual, iterations=iterations)
        self.last_residual = last_residual
        self.iterations = iterations


class NoConvergenceError(ShootingError):
    """Newton iteration hit its iteration or line-search limit."""


class SingularJacobianError(ShootingError):
    """The shooting Jacobian is numerically singular."""


class InconsistencyError(NumericalError):
    """Two independent estimates of the same quantity disagree."""


class ScalingViolationError(NumericalError):
    """The declared theta-scaling does not hold for the model."""


class InsufficientDataError(NumericalError):
    """Too few samples to support an estimate."""


class DomainError(HamExpandError):
    """The requested quantity is undefined for the given input."""


class MomentExplosionRegimeError(DomainError):
    """Wing formula requested with B1 <= 2."""


class ArtifactWriteError(HamExpandError):
    """An output file could not be written."""


class PipelineStepError(HamExpandError):
    """Error raised when a named expansion pipeline step fails."""

    def __init__(self, step_name: str, error: Exception) -> None:
        self.step_name = step_name
        self.error = error
        super().__init__(f"Step '{step_name}' failed: {str(error)}", step=step_name)

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        if isinstance(self.error, HamExpandError):
            payload["cause"] = self.error.to_dict()
        else:
            payload["cause"] = {"error": type(self.error).__name__, "message": str(self.error)}
        return payload

    @property
    def is_contract_violation(self) -> bool:
        return isinstance(self.error, ContractViolationError)


def _jsonable(value: Any) -> Any:
    # numpy scalars and arrays show up in details
    tolist: Optional[Any] = getattr(value, "tolist", None)
    if callable(tolist):
        return tolist()
    return value
