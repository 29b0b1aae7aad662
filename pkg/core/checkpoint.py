"""
Binary checkpoint format for ParamSets.

Layout:
    8 bytes   magic
    <IqQ      format version, rng seed, header length
    header    UTF-8 JSON: entries (name, shape, byte offset) + free-form metadata
    payload   little-endian float64 arrays, in entry order
"""

import json
import struct
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError

from core.params import ParamSet
from errors import CheckpointError

MAGIC = b"SKLCKPT\x00"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<IqQ")


class CheckpointEntry(BaseModel):
    name: str
    shape: List[int]
    offset: int


class CheckpointHeader(BaseModel):
    entries: List[CheckpointEntry]
    metadata: Dict[str, Any] = {}


def save_checkpoint(path: str, params: ParamSet, metadata: Dict[str, Any] = None) -> None:
    """Write params (and JSON-serializable metadata) to path."""
    entries = []
    payload = []
    offset = 0
    for name, value in params.items():
        blob = value.data.astype("<f8").tobytes()
        entries.append(CheckpointEntry(name=name, shape=list(value.shape), offset=offset))
        payload.append(blob)
        offset += len(blob)
    header = CheckpointHeader(entries=entries, metadata=metadata or {}).model_dump_json().encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(_PREAMBLE.pack(FORMAT_VERSION, params.seed, len(header)))
        handle.write(header)
        for blob in payload:
            handle.write(blob)


def load_checkpoint(path: str) -> Tuple[ParamSet, Dict[str, Any]]:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: On a missing file, wrong magic or version, or truncation
    """
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    start = len(MAGIC)
    if len(raw) < start + _PREAMBLE.size:
        raise CheckpointError(f"{path} is truncated")
    version, seed, header_len = _PREAMBLE.unpack_from(raw, start)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path} has format version {version}, expected {FORMAT_VERSION}")
    start += _PREAMBLE.size
    try:
        header = CheckpointHeader(**json.loads(raw[start:start + header_len].decode("utf-8")))
    except (ValueError, ValidationError) as e:
        raise CheckpointError(f"{path} has a corrupt header: {e}") from e
    payload = memoryview(raw)[start + header_len:]

    params = ParamSet(seed=seed)
    for entry in header.entries:
        count = int(np.prod(entry.shape)) if entry.shape else 1
        end = entry.offset + 8 * count
        if end > len(payload):
            raise CheckpointError(f"{path} is truncated inside '{entry.name}'")
        data = np.frombuffer(payload[entry.offset:end], dtype="<f8").astype(np.float64).reshape(entry.shape)
        params.add(entry.name, data)
    return params, header.metadata
