"""Middleware chain for processing artifact commands."""

import logging
from functools import wraps
from typing import Any, Callable, List, Optional

from .commands import ArtifactCommand

logger = logging.getLogger(__name__)

Handler = Callable[[ArtifactCommand], Optional[ArtifactCommand]]


class MiddlewareError(Exception):
    """A handler in the chain failed."""

    def __init__(self, message: str, handler_name: str, command_id: str) -> None:
        self.handler_name = handler_name
        self.command_id = command_id
        super().__init__(f"{handler_name}: {message} (command: {command_id})")


def create_middleware_handler(
    name: str,
) -> Callable[[Callable[..., Optional[ArtifactCommand]]], Callable[..., Optional[ArtifactCommand]]]:
    """Wrap a handler method with debug logging and error tagging."""

    def decorator(
        method: Callable[..., Optional[ArtifactCommand]],
    ) -> Callable[..., Optional[ArtifactCommand]]:
        @wraps(method)
        def wrapped(instance: Any, command: ArtifactCommand) -> Optional[ArtifactCommand]:
            logger.debug(f"Starting handler '{name}' for command {command.id}")
            try:
                result = method(instance, command)
            except Exception as e:
                logger.error(f"Error in handler '{name}' for command {command.id}: {e}")
                raise MiddlewareError(str(e), name, str(command.id)) from e
            logger.debug(f"Completed handler '{name}' for command {command.id}")
            return result

        return wrapped

    return decorator


class ArtifactMiddleware:
    """Ordered handlers; a handler returning None ends the chain."""

    def __init__(self) -> None:
        self.handlers: List[Handler] = []

    def use(self, handler: Handler) -> None:
        self.handlers.append(handler)

    def execute(self, command: ArtifactCommand) -> Optional[ArtifactCommand]:
        current: Optional[ArtifactCommand] = command
        try:
            for handler in self.handlers:
                if current is None:
                    break
                current = handler(current)
            return current
        except MiddlewareError:
            raise
        except Exception as e:
            raise MiddlewareError(str(e), "middleware_chain", str(command.id)) from e
