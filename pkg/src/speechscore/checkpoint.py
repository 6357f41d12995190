"""Binary checkpoint format.

Layout: 8-byte magic, uint32 format version, uint32-length-prefixed UTF-8
config text (canonical sorted key=value lines), uint32 parameter count, then
per parameter: uint32 name length, name bytes, uint8 rank, uint32 dims,
float32 little-endian payload.  All integers little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

from .autodiff import Tensor
from .models import ModelConfig, config_from_text, config_to_text

MAGIC = b"SPSCCKPT"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(params: dict, cfg: ModelConfig, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        text = config_to_text(cfg).encode("utf-8")
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            data = params[name].data
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def _read(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: wanted {n} bytes, got {len(buf)}")
    return buf


def load_checkpoint(path, expect: ModelConfig | None = None):
    """Load (params, cfg); with `expect` set, a differing stored config is a
    CheckpointError."""
    with open(path, "rb") as fh:
        if _read(fh, len(MAGIC)) != MAGIC:
            raise CheckpointError("bad magic bytes: not a checkpoint file")
        (version,) = struct.unpack("<I", _read(fh, 4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (text_len,) = struct.unpack("<I", _read(fh, 4))
        try:
            cfg = config_from_text(_read(fh, text_len).decode("utf-8"))
        except ValueError as exc:
            raise CheckpointError(f"corrupt config block: {exc}") from exc
        if expect is not None and cfg != expect:
            raise CheckpointError(
                f"config mismatch: checkpoint holds {cfg.variant} "
                f"({config_to_text(cfg).strip()!r}), caller expects {expect.variant}")
        (count,) = struct.unpack("<I", _read(fh, 4))
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read(fh, 4))
            name = _read(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", _read(fh, 1))
            shape = struct.unpack(f"<{rank}I", _read(fh, 4 * rank))
            size = int(np.prod(shape, dtype=np.int64)) if rank else 1
            data = np.frombuffer(_read(fh, 4 * size), dtype="<f4")
            params[name] = Tensor(data.astype(np.float64).reshape(shape),
                                  requires_grad=True)
        if fh.read(1):
            raise CheckpointError("trailing bytes after last parameter record")
    return params, cfg
