"""
Checkpoint container.

    magic "DSRN" | u32 format version | 32-byte config hash | u32 entry count
    entry: u32 kind | u32 name length | utf-8 name | payload
      kind 0 (array): u32 ndim | ndim x u32 dims | u64 count | count x f64 (little endian)
      kind 1 (json):  u32 byte length | utf-8 JSON
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from shared.errors import CheckpointError, ConfigMismatchError

log = logging.getLogger(__name__)

MAGIC = b"DSRN"
FORMAT_VERSION = 1
ARRAY, BLOB = 0, 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass
class Checkpoint:
    config_hash: bytes
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    blobs: Dict[str, Any] = field(default_factory=dict)


def checkpoint_save(path: Path, checkpoint: Checkpoint) -> None:
    if len(checkpoint.config_hash) != 32:
        raise ValueError("config hash must be 32 bytes")
    parts = [MAGIC, _U32.pack(FORMAT_VERSION), checkpoint.config_hash,
             _U32.pack(len(checkpoint.arrays) + len(checkpoint.blobs))]
    for name, arr in checkpoint.arrays.items():
        # keeps 0-d shapes; ascontiguousarray returns at least 1-d
        arr = np.asarray(arr, dtype="<f8")
        key = name.encode("utf-8")
        parts += [_U32.pack(ARRAY), _U32.pack(len(key)), key, _U32.pack(arr.ndim)]
        parts += [_U32.pack(d) for d in arr.shape]
        parts += [_U64.pack(arr.size), arr.tobytes()]
    for name, value in checkpoint.blobs.items():
        key = name.encode("utf-8")
        body = json.dumps(value, sort_keys=True).encode("utf-8")
        parts += [_U32.pack(BLOB), _U32.pack(len(key)), key, _U32.pack(len(body)), body]

    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)
    log.info("checkpoint saved path=%s arrays=%d blobs=%d", path, len(checkpoint.arrays), len(checkpoint.blobs))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.offset + n > len(self.raw):
            raise CheckpointError(f"truncated {what}", self.offset)
        out = self.raw[self.offset:self.offset + n]
        self.offset += n
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return _U64.unpack(self.take(8, what))[0]


def checkpoint_load(path: Path, expected_hash: Optional[bytes] = None) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)", 0)
    version = r.u32("format version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}", 4)
    config_hash = r.take(32, "config hash")
    if expected_hash is not None and config_hash != expected_hash:
        raise ConfigMismatchError("checkpoint was written under a different configuration")

    ckpt = Checkpoint(config_hash)
    for _ in range(r.u32("entry count")):
        start = r.offset
        kind = r.u32("entry kind")
        try:
            name = r.take(r.u32("name length"), "name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError("entry name is not utf-8", start) from e
        if kind == ARRAY:
            dims = tuple(r.u32("dimension") for _ in range(r.u32("ndim")))
            count = r.u64("element count")
            if count != int(np.prod(dims, dtype=np.int64)):
                raise CheckpointError(f"entry {name!r}: count {count} does not match shape {dims}", start)
            data = np.frombuffer(r.take(8 * count, f"data of {name!r}"), dtype="<f8")
            ckpt.arrays[name] = data.astype(np.float64).reshape(dims)
        elif kind == BLOB:
            body = r.take(r.u32("blob length"), f"blob {name!r}")
            try:
                ckpt.blobs[name] = json.loads(body.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise CheckpointError(f"blob {name!r} is not valid JSON", start) from e
        else:
            raise CheckpointError(f"unknown entry kind {kind}", start)
    if r.offset != len(r.raw):
        raise CheckpointError("trailing bytes after last entry", r.offset)
    log.info("checkpoint loaded path=%s arrays=%d blobs=%d", path, len(ckpt.arrays), len(ckpt.blobs))
    return ckpt
