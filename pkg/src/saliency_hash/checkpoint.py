"""Binary checkpoint format.

Layout (little endian)::

    b"ASH1" | version u32 | arch u8 (0=U, 1=L) | K u32 | C, H, W u32
    | tensor count u32
    | per tensor: name length u16, UTF-8 name, ndim u8, dims u32 each, f32 values

Tensors are all parameters followed by all running statistics, in registry
order. Values are stored as float32, so float32 models round-trip bit-exactly.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, ShapeMismatchError, TruncatedFileError, VersionMismatchError
from .model import AshConfig, HashModel, build_model

MAGIC = b"ASH1"
VERSION = 1
ARCH_IDS = {"U": 0, "L": 1}


def save_checkpoint(model: HashModel, path) -> None:
    cfg = model.cfg
    state = model.state()
    parts = [
        MAGIC,
        struct.pack("<IBI3I", VERSION, ARCH_IDS[cfg.arch], cfg.k, *cfg.input_shape),
        struct.pack("<I", len(state)),
    ]
    for name, value in state.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"file truncated at byte {self.pos} (needed {n} more)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Header fields and the raw tensors of a checkpoint file."""
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise BadMagicError(f"{path}: bad magic, not an ASH1 checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {VERSION}")
    arch_id, k, c, h, w = r.unpack("<BI3I")
    arch = {v: a for a, v in ARCH_IDS.items()}.get(arch_id)
    if arch is None:
        raise ShapeMismatchError(f"{path}: unknown architecture id {arch_id}")
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I")
        n = int(np.prod(dims)) if ndim else 1
        tensors[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims)
    header = {"version": version, "arch": arch, "k": k, "input_shape": (c, h, w)}
    return header, tensors


def load_checkpoint(path, cfg: AshConfig, dtype=np.float32) -> HashModel:
    """Build a model for ``cfg`` and fill it from ``path``.

    The header and every tensor shape must agree with ``cfg``.
    """
    header, tensors = read_checkpoint(path)
    if header["arch"] != cfg.arch or header["k"] != cfg.k or header["input_shape"] != cfg.input_shape:
        raise ShapeMismatchError(
            f"{path}: header (arch={header['arch']}, K={header['k']}, input={header['input_shape']}) "
            f"does not match config (arch={cfg.arch}, K={cfg.k}, input={cfg.input_shape})")
    model = build_model(cfg, dtype)
    state = model.state()
    if set(tensors) != set(state):
        missing = sorted(set(state) - set(tensors))
        extra = sorted(set(tensors) - set(state))
        raise ShapeMismatchError(f"{path}: tensor names differ (missing {missing}, unexpected {extra})")
    for name, target in state.items():
        if tensors[name].shape != target.shape:
            raise ShapeMismatchError(
                f"{path}: tensor {name} has shape {tensors[name].shape}, expected {target.shape}")
        target[...] = tensors[name]
    return model
