"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"MSRN"                     magic
    u32   format version (1)
    u32   config length, then that many bytes of UTF-8 JSON (MsrNetConfig)
    u32   parameter count
    per parameter, sorted by name:
        u32 name length, name (UTF-8)
        u32 ndim, ndim x u32 shape
        float32 payload, C order
    u32   1 if training state follows, else 0
    if training state:
        u64 iteration
        per parameter, same order: u64 Adam step count, float32 m, float32 v
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Optional

import numpy as np

from .model import MsrNet, MsrNetConfig

MAGIC = b"MSRN"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass
class TrainState:
    iteration: int


def _write_array(fh: BinaryIO, arr: np.ndarray):
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(path, model: MsrNet, iteration: Optional[int] = None) -> Path:
    path = Path(path)
    params = model.parameters()
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode()
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<I", p.value.ndim))
            fh.write(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
            _write_array(fh, p.value)
        if iteration is None:
            fh.write(struct.pack("<I", 0))
        else:
            fh.write(struct.pack("<I", 1))
            fh.write(struct.pack("<Q", iteration))
            for p in params:
                fh.write(struct.pack("<Q", p.step_count))
                _write_array(fh, p.adam_m)
                _write_array(fh, p.adam_v)
    tmp.replace(path)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def floats(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)


def load_checkpoint(path, expect_config: Optional[MsrNetConfig] = None):
    """Read a checkpoint; returns ``(model, train_state or None)``.

    Raises :class:`CheckpointFormatError` on bad magic, unknown version,
    truncation, or when ``expect_config`` differs from the stored one.
    """
    data = Path(path).read_bytes()
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError(f"{path}: not an MSRN checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported format version {version}")
    try:
        config = MsrNetConfig(**json.loads(r.take(r.u32()).decode()))
    except (TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: bad config block: {exc}") from exc
    if expect_config is not None and expect_config != config:
        raise CheckpointFormatError(
            f"{path}: architecture mismatch: checkpoint has {config}, requested {expect_config}")
    model = MsrNet(config, init="zeros")
    shapes = {p.name: p.value.shape for p in model.parameters()}
    count = r.u32()
    names = []
    for _ in range(count):
        name = r.take(r.u32()).decode()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        if name not in shapes or tuple(shapes[name]) != tuple(shape):
            raise CheckpointFormatError(f"{path}: unexpected parameter {name} {shape}")
        model.params[name].value[...] = r.floats(shape)
        names.append(name)
    if sorted(names) != sorted(shapes):
        raise CheckpointFormatError(f"{path}: parameter set does not match config")
    state = None
    if r.u32():
        state = TrainState(iteration=r.u64())
        for p in model.parameters():
            p.step_count = r.u64()
            p.adam_m[...] = r.floats(p.value.shape)
            p.adam_v[...] = r.floats(p.value.shape)
    if r.pos != len(data):
        raise CheckpointFormatError(f"{path}: trailing bytes")
    return model, state
