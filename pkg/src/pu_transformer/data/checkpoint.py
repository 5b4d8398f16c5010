"""``PUTFv1`` binary checkpoints.

Layout (all integers little-endian)::

    b"PUTFv1"
    u32 config_len, config_len bytes of UTF-8 ``key=value`` lines
    u32 tensor_count
    per tensor:
        u16 name_len, name bytes (UTF-8)
        u32 rank, rank x u32 extents
        prod(extents) x float32 data
        u64 footer = data length in bytes

Parameters are written first, then batch-norm running statistics.  Data is
always float32; float64 models are rounded on save.
"""
from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..model.config import ModelConfig
from ..model.params import ModelParams, buffer_shapes, param_shapes
from ..tensor import Tensor

MAGIC = b"PUTF"
VERSION = b"v1"


class CheckpointError(Exception):
    """Base class for unreadable checkpoints."""


class BadMagicError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class IntegrityError(CheckpointError):
    """Footer or extents disagree with the stored data."""


def encode_checkpoint(params: ModelParams, cfg: ModelConfig) -> bytes:
    out = [MAGIC + VERSION]
    text = cfg.to_text().encode("utf-8")
    out.append(struct.pack("<I", len(text)))
    out.append(text)
    items = list(params.tensors.items()) + [(n, b) for n, b in params.buffers.items()]
    out.append(struct.pack("<I", len(items)))
    for name, t in items:
        arr = np.ascontiguousarray(t.data if isinstance(t, Tensor) else t, dtype="<f4")
        nb = name.encode("utf-8")
        out.append(struct.pack("<H", len(nb)))
        out.append(nb)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        data = arr.tobytes()
        out.append(data)
        out.append(struct.pack("<Q", len(data)))
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedCheckpointError(f"file ends inside {what} at byte {self.pos}")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buf: bytes):
    """Parse checkpoint bytes into ``(params, cfg)``."""
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise BadMagicError("not a PUTF checkpoint")
    if buf[4:6] != VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {buf[4:6]!r}")
    rd = _Reader(buf)
    rd.pos = 6
    (clen,) = rd.unpack("<I", "config length")
    cfg = ModelConfig.from_text(rd.take(clen, "config").decode("utf-8"))
    (count,) = rd.unpack("<I", "tensor count")
    arrays = OrderedDict()
    for _ in range(count):
        (nlen,) = rd.unpack("<H", "name length")
        name = rd.take(nlen, "tensor name").decode("utf-8")
        (rank,) = rd.unpack("<I", f"{name} rank")
        shape = rd.unpack(f"<{rank}I", f"{name} extents") if rank else ()
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        data = rd.take(nbytes, f"{name} data")
        (footer,) = rd.unpack("<Q", f"{name} footer")
        if footer != nbytes:
            raise IntegrityError(f"{name}: footer says {footer} bytes, extents give {nbytes}")
        arrays[name] = np.frombuffer(data, dtype="<f4").reshape(shape)
    if rd.pos != len(buf):
        raise IntegrityError(f"{len(buf) - rd.pos} trailing bytes after last tensor")

    pshapes, bshapes = param_shapes(cfg), buffer_shapes(cfg)
    if set(arrays) != set(pshapes) | set(bshapes):
        raise IntegrityError("tensor names do not match the stored config")
    for name, shape in list(pshapes.items()) + list(bshapes.items()):
        if arrays[name].shape != shape:
            raise IntegrityError(f"{name}: stored shape {arrays[name].shape} != expected {shape}")
    tensors = OrderedDict((n, Tensor(arrays[n], dtype=cfg.dtype, requires_grad=True, name=n)) for n in pshapes)
    buffers = OrderedDict((n, arrays[n].astype(cfg.dtype)) for n in bshapes)
    return ModelParams(cfg, tensors, buffers), cfg


def save_checkpoint(params: ModelParams, cfg: ModelConfig, path) -> None:
    Path(path).write_bytes(encode_checkpoint(params, cfg))


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
