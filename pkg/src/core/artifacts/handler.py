"""Command handler for artifact writes."""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional

import pandas as pd

from .codecs import encode_json, encode_samples, encode_table
from .commands import ArtifactCommand, ArtifactKind, CommandStatus
from .middleware import ArtifactMiddleware, MiddlewareError, create_middleware_handler

logger = logging.getLogger(__name__)

_ENCODERS: Dict[ArtifactKind, Callable[..., bytes]] = {
    ArtifactKind.JSON: encode_json,
    ArtifactKind.CSV: encode_table,
    ArtifactKind.SAMPLES: encode_samples,
}


class ArtifactCommandHandler:
    """Runs artifact commands through validate, encode, prepare, write, record."""

    def __init__(self, base_dir: Path) -> None:
        self.base_dir = base_dir
        self.middleware = ArtifactMiddleware()
        self.command_history: List[ArtifactCommand] = []
        self.setup_default_handlers()

    def setup_default_handlers(self) -> None:
        self.middleware.use(self._validate_command_handler)
        self.middleware.use(self._encode_handler)
        self.middleware.use(self._prepare_directories_handler)
        self.middleware.use(self._write_handler)
        self.middleware.use(self._record_command_handler)

    def resolve(self, path: Path) -> Path:
        return path if path.is_absolute() else self.base_dir / path

    @create_middleware_handler("validate_command")
    def _validate_command_handler(
        self, command: ArtifactCommand
    ) -> Optional[ArtifactCommand]:
        if not command.path.name:
            raise ValueError("Artifact command needs a file name")
        if command.kind is ArtifactKind.CSV and not isinstance(
            command.content, pd.DataFrame
        ):
            raise ValueError("CSV artifacts take a DataFrame")
        return command.with_status(CommandStatus.IN_PROGRESS)

    @create_middleware_handler("encode")
    def _encode_handler(self, command: ArtifactCommand) -> Optional[ArtifactCommand]:
        return command.with_payload(_ENCODERS[command.kind](command.content))

    @create_middleware_handler("prepare_directories")
    def _prepare_directories_handler(
        self, command: ArtifactCommand
    ) -> Optional[ArtifactCommand]:
        self.resolve(command.path).parent.mkdir(parents=True, exist_ok=True)
        return command

    @create_middleware_handler("write")
    def _write_handler(self, command: ArtifactCommand) -> Optional[ArtifactCommand]:
        target = self.resolve(command.path)
        assert command.payload is not None
        target.write_bytes(command.payload)
        logger.debug(f"Wrote {len(command.payload)} bytes to '{target}'")
        return command.with_status(CommandStatus.COMPLETED)

    @create_middleware_handler("record_command")
    def _record_command_handler(
        self, command: ArtifactCommand
    ) -> Optional[ArtifactCommand]:
        self.command_history.append(command)
        return command

    def execute(self, command: ArtifactCommand) -> ArtifactCommand:
        """Run the chain; failures come back as a FAILED command."""
        try:
            result = self.middleware.execute(command)
        except MiddlewareError as e:
            logger.error(f"Failed to execute command {command.id}: {e}")
            return command.with_status(CommandStatus.FAILED, str(e))
        if result is None:
            return command.with_status(CommandStatus.FAILED, "Command chain terminated")
        return result
