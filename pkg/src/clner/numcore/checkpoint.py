"""Flat binary checkpoint archive: parameter path -> (shape, float64 data).

Byte layout (all integers little-endian):

    offset 0   magic ``CLNCKPT1`` (8 bytes)
    uint32     entry count
    per entry, in ascending name order:
        uint16     name length in bytes
        bytes      name, UTF-8
        uint8      ndim
        uint32*ndim   dimension sizes
        float64*prod(dims)   values, row-major, little-endian
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CLNCKPT1"


class CheckpointError(Exception):
    """Raised when an archive is malformed or cannot be read."""


def save_checkpoint(path, arrays: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint archive")
    pos = 8

    def take(count: int) -> bytes:
        nonlocal pos
        if pos + count > len(blob):
            raise CheckpointError(f"{path}: truncated archive at byte {pos}")
        piece = blob[pos : pos + count]
        pos += count
        return piece

    (count,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        n_values = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(8 * n_values), dtype="<f8").reshape(shape)
        arrays[name] = data.astype(np.float64)
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes after entries")
    return arrays
