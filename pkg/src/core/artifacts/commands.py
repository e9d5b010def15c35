"""Command structures for artifact writes."""

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional
from uuid import UUID, uuid4


class CommandStatus(Enum):
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"


class ArtifactKind(Enum):
    """Encoding used for the artifact content."""

    JSON = "json"
    CSV = "csv"
    SAMPLES = "samples"


@dataclass(frozen=True)
class ArtifactCommand:
    """Request to write one output file.

    Attributes:
        kind: How ``content`` is encoded
        path: Target file, relative to the manager's base directory unless absolute
        content: Mapping for JSON, DataFrame for CSV and array for samples
        payload: Encoded bytes, filled in by the encoding handler
        metadata: Free-form annotations kept in the history
        status: Current status of the command
        error: Error message if the command failed
    """

    kind: ArtifactKind
    path: Path
    content: Any
    id: UUID = field(default_factory=uuid4)
    payload: Optional[bytes] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    status: CommandStatus = CommandStatus.PENDING
    error: Optional[str] = None

    def with_status(
        self, status: CommandStatus, error: Optional[str] = None
    ) -> "ArtifactCommand":
        return replace(self, status=status, error=error)

    def with_payload(self, payload: bytes) -> "ArtifactCommand":
        return replace(self, payload=payload)
