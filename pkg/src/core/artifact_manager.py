"""High-level interface for writing run outputs."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from src.core.errors import ArtifactWriteError

from .artifacts import (
    ArtifactCommand,
    ArtifactCommandHandler,
    ArtifactKind,
    CommandStatus,
    decode_samples,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ArtifactManager:
    """Writes JSON, CSV and sample files through the command chain.

    Relative paths resolve against ``base_dir``.
    """

    def __init__(self, base_dir: PathLike = ".") -> None:
        self.base_dir = Path(base_dir)
        self.command_handler = ArtifactCommandHandler(self.base_dir)
        logger.debug(f"Initialized ArtifactManager with base_dir: {self.base_dir}")

    def _save(
        self,
        kind: ArtifactKind,
        path: PathLike,
        content: Any,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> Path:
        command = ArtifactCommand(
            kind=kind, path=Path(path), content=content, metadata=metadata or {}
        )
        result = self.command_handler.execute(command)
        if result.status is not CommandStatus.COMPLETED:
            raise ArtifactWriteError(
                f"Failed to write {kind.value} artifact: {result.error}",
                path=str(path),
            )
        return self.command_handler.resolve(result.path)

    def save_json(self, path: PathLike, content: Any, **metadata: Any) -> Path:
        return self._save(ArtifactKind.JSON, path, content, metadata)

    def save_table(self, path: PathLike, frame: pd.DataFrame, **metadata: Any) -> Path:
        return self._save(ArtifactKind.CSV, path, frame, metadata)

    def save_samples(self, path: PathLike, values: np.ndarray, **metadata: Any) -> Path:
        return self._save(ArtifactKind.SAMPLES, path, values, metadata)

    def load_samples(self, path: PathLike) -> np.ndarray:
        return decode_samples(self.command_handler.resolve(Path(path)).read_bytes())

    def history(self) -> List[ArtifactCommand]:
        return list(self.command_handler.command_history)
