"""Artifact writes using Command and Middleware patterns."""

from .codecs import decode_samples, encode_json, encode_samples, encode_table
from .commands import ArtifactCommand, ArtifactKind, CommandStatus
from .handler import ArtifactCommandHandler
from .middleware import ArtifactMiddleware, MiddlewareError, create_middleware_handler

__all__ = [
    "CommandStatus",
    "ArtifactKind",
    "ArtifactCommand",
    "MiddlewareError",
    "ArtifactMiddleware",
    "create_middleware_handler",
    "ArtifactCommandHandler",
    "encode_json",
    "encode_table",
    "encode_samples",
    "decode_samples",
]
