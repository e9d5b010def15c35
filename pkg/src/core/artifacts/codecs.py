"""Byte encodings for artifact contents.

Floats in JSON and CSV are written in the shortest form that reads back to
the same double.

Samples use a 16-byte header, the magic ``HXSAMP01`` followed by the count
as little-endian uint64, then the values as little-endian float64.
"""

import io
import json
import math
from typing import Any

import numpy as np
import pandas as pd

from src.core.errors import ContractViolationError

SAMPLES_MAGIC = b"HXSAMP01"
HEADER_SIZE = 16


def _plain(value: Any) -> Any:
    """numpy values to builtins; non-finite floats to null."""
    tolist = getattr(value, "tolist", None)
    if callable(tolist):
        return _plain(tolist())
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def encode_json(content: Any) -> bytes:
    return (json.dumps(_plain(content), indent=2, allow_nan=False) + "\n").encode("utf-8")


def encode_table(frame: pd.DataFrame) -> bytes:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False)
    return buffer.getvalue().encode("utf-8")


def encode_samples(values: Any) -> bytes:
    arr = np.asarray(values, dtype="<f8")
    if arr.ndim != 1:
        raise ContractViolationError(
            f"Sample files hold one column, got shape {arr.shape}"
        )
    header = SAMPLES_MAGIC + np.array([arr.size], dtype="<u8").tobytes()
    return header + arr.tobytes()


def decode_samples(data: bytes) -> np.ndarray:
    """Inverse of :func:`encode_samples`.

    Raises:
        ContractViolationError: If the magic or the length does not match
    """
    if len(data) < HEADER_SIZE or data[:8] != SAMPLES_MAGIC:
        raise ContractViolationError("Not a sample file: bad header")
    count = int(np.frombuffer(data[8:HEADER_SIZE], dtype="<u8")[0])
    expected = HEADER_SIZE + 8 * count
    if len(data) != expected:
        raise ContractViolationError(
            f"Sample file declares {count} values but holds {len(data) - HEADER_SIZE} bytes",
            declared=count,
            size=len(data),
        )
    return np.frombuffer(data[HEADER_SIZE:], dtype="<f8").astype(float)
