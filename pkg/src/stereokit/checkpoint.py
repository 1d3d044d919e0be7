"""Flat parameter checkpoint container.

Binary layout (all integers little-endian):

    bytes 0..4   magic b"SNKT1"
    u32          metadata length M
    M bytes      metadata, UTF-8 JSON (model config, training step, ...)
    u32          parameter count N
    N entries:
        u16      name byte length L
        L bytes  name, UTF-8
        u8       rank R
        R x u32  extents, row-major order
        payload  prod(extents) x float32, little-endian raw bytes

Values are stored as raw float32 bytes, so a write -> read round trip is
bit-exact. Parameters held in float64 are cast to float32 on save.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable

import numpy as np

from .tensor import Param

MAGIC = b"SNKT1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: Iterable[Param], metadata: dict | None = None) -> None:
    items = list(params)
    names = [p.name for p in items]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate parameter names")
    blob = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(items)))
        for p in items:
            name = p.name.encode("utf-8")
            f.write(struct.pack("<H", len(name)))
            f.write(name)
            arr = np.ascontiguousarray(p.data, dtype="<f4")
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (metadata, {name: float32 array})."""
    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC)) != MAGIC:
            raise CheckpointError(f"bad magic; not a {MAGIC.decode()} checkpoint")
        (mlen,) = struct.unpack("<I", _read_exact(f, 4))
        metadata = json.loads(_read_exact(f, mlen).decode("utf-8")) if mlen else {}
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(f, 2))
            name = _read_exact(f, nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1))
            shape = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank))
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(_read_exact(f, 4 * n), dtype="<f4").reshape(shape)
            tensors[name] = data.copy()
    return metadata, tensors


def restore_params(params: Iterable[Param], tensors: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into existing params, matching by name."""
    for p in params:
        if p.name not in tensors:
            raise CheckpointError(f"checkpoint is missing parameter {p.name!r}")
        src = tensors[p.name]
        if src.shape != p.shape:
            raise CheckpointError(f"shape mismatch for {p.name!r}: checkpoint {src.shape}, model {p.shape}")
        p.value.data = src.astype(p.value.dtype)
