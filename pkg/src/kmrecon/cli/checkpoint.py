"""KMCK checkpoint format.

Layout: magic ``KMCK``, u32 format version, a length-prefixed strategy
tag, a length-prefixed config snapshot (the flat key=value text), then a
u32 tensor count followed by named tensors: u32 name length + UTF-8 name,
u32 rank, u32 dims, 32-bit little-endian floats row-major.  Includes the
parameter groups and the Adam moments.
"""

from __future__ import annotations

import struct

import numpy as np

_MAGIC = b"KMCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint."""


def _write_str(fh, text):
    raw = text.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh):
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def _write_tensor(fh, name, array):
    raw = name.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)
    arr = np.ascontiguousarray(array, dtype="<f4")
    fh.write(struct.pack("<I", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(arr.tobytes())


def _read_tensor(fh):
    (n,) = struct.unpack("<I", fh.read(4))
    name = fh.read(n).decode("utf-8")
    (rank,) = struct.unpack("<I", fh.read(4))
    shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
    return name, data.copy()


def save_checkpoint(path, params, optimizer, strategy, config_text,
                    epoch=0):
    """Persist parameters and optimizer state as 32-bit floats."""
    arrays = {name: t.data for name, t in params.named_tensors()}
    if optimizer is not None:
        arrays.update(optimizer.state_tensors())
    arrays["meta/epoch"] = np.asarray([float(epoch)], dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        _write_str(fh, strategy)
        _write_str(fh, config_text)
        fh.write(struct.pack("<I", len(arrays)))
        for name in arrays:
            _write_tensor(fh, name, arrays[name])


def load_checkpoint(path):
    """Read a checkpoint into (strategy, config_text, arrays, epoch)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {version} unsupported"
                f" (expected {FORMAT_VERSION})")
        strategy = _read_str(fh)
        config_text = _read_str(fh)
        (count,) = struct.unpack("<I", fh.read(4))
        arrays = {}
        for _ in range(count):
            name, data = _read_tensor(fh)
            arrays[name] = data
    epoch = int(round(float(arrays.pop("meta/epoch", np.zeros(1))[0])))
    return strategy, config_text, arrays, epoch


def restore_params(params, arrays, dtype=np.float32):
    """Copy checkpointed tensors into a structurally matching ParameterSet."""
    for name, tensor in params.named_tensors():
        if name not in arrays:
            raise CheckpointError(f"checkpoint missing tensor {name!r}")
        stored = arrays[name]
        if stored.shape != tensor.data.shape:
            raise CheckpointError(
                f"checkpoint tensor {name!r} has shape {stored.shape},"
                f" expected {tensor.data.shape}")
        tensor.data = stored.astype(dtype)
    return params
