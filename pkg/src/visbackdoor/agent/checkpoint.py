"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    offset 0   4 bytes   magic b"VBCK"
    offset 4   u32       format version (1)
    offset 8   u64       header length L
    offset 16  L bytes   UTF-8 JSON header, sorted keys:
                         {"config": ModelConfig dict, "names": [...], "shapes": [[...], ...], "meta": {...}}
    offset 16+L          float64 ("<f8") blocks, one per parameter, C order, declaration order

Nothing else is stored, so writing the same parameters and meta twice gives identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .model import AgentParams, ModelConfig

MAGIC = b"VBCK"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def encode_checkpoint(params: AgentParams, meta: Optional[dict] = None) -> bytes:
    header = {
        "config": params.config.to_dict(),
        "names": list(params.names),
        "shapes": [list(a.shape) for a in params.arrays],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + params.tobytes()


def decode_checkpoint(data: bytes) -> tuple[AgentParams, dict]:
    if len(data) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint prefix")
    magic, version, n = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a parameter checkpoint")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(data[_PREFIX.size:_PREFIX.size + n].decode())
    config = ModelConfig.from_dict(header["config"])
    shapes = config.shapes()
    if list(shapes) != header["names"] or [list(s) for s in shapes.values()] != header["shapes"]:
        raise CheckpointError("header names or shapes disagree with the model configuration")
    offset = _PREFIX.size + n
    arrays = []
    for shape in shapes.values():
        count = int(np.prod(shape, dtype=np.int64))
        if offset + 8 * count > len(data):
            raise CheckpointError("truncated parameter block")
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape))
        offset += 8 * count
    if offset != len(data):
        raise CheckpointError("trailing bytes after the last parameter block")
    return AgentParams(config, tuple(arrays)), header["meta"]


def save_checkpoint(path: Union[str, Path], params: AgentParams, meta: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(params, meta))
    return path


def load_checkpoint(path: Union[str, Path]) -> tuple[AgentParams, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    return decode_checkpoint(path.read_bytes())
