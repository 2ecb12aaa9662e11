"""Raster ingestion and the KMR1 binary interchange format.

KMR1 layout: magic ``KMR1``, then little-endian u32 height, width, channels
(1 or 2), then 32-bit little-endian floats, one full row-major plane per
channel.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .sampling import ComplexImage

_MAGIC = b"KMR1"
_HEADER = struct.Struct("<4sIII")


class RasterFormatError(ValueError):
    """The file is not a valid KMR1 raster."""


def write_kmr1(path, data):
    """Write a (h, w) or (2, h, w) float array as a KMR1 raster."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3 or arr.shape[0] not in (1, 2):
        raise RasterFormatError(f"KMR1 needs (h, w) or (c<=2, h, w), got {arr.shape}")
    channels, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, h, w, channels))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_kmr1(path):
    """Read a KMR1 raster back as a float32 (channels, h, w) array."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise RasterFormatError(f"{path}: truncated header")
        magic, h, w, channels = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise RasterFormatError(f"{path}: bad magic {magic!r}")
        if channels not in (1, 2):
            raise RasterFormatError(f"{path}: channels must be 1 or 2, got {channels}")
        payload = fh.read(4 * channels * h * w)
    if len(payload) != 4 * channels * h * w:
        raise RasterFormatError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(channels, h, w).copy()


def write_mask_kmr1(path, mask):
    """Export a sampling mask as a 1-channel KMR1 raster of {0, 1}."""
    write_kmr1(path, mask.kept.astype(np.float32))


def load_image(path):
    """Load a KMR1 raster or an 8/16-bit grayscale PNG as a ComplexImage.

    Intensities are normalized so the magnitude lies in [0, 1] at ingestion.
    """
    path = str(path)
    if path.endswith(".kmr1") or path.endswith(".kmr"):
        data = read_kmr1(path)
        if data.shape[0] == 1:
            img = ComplexImage(real=data[0].astype(np.float64),
                               imag=np.zeros_like(data[0], dtype=np.float64))
        else:
            img = ComplexImage(real=data[0].astype(np.float64),
                               imag=data[1].astype(np.float64))
        peak = img.magnitude().max()
        if peak > 1.0:
            return ComplexImage(real=img.real / peak, imag=img.imag / peak)
        return img
    with Image.open(path) as raw:
        if raw.mode == "I;16":
            arr = np.asarray(raw, dtype=np.float64) / 65535.0
        elif raw.mode in ("L", "I", "F"):
            arr = np.asarray(raw.convert("F"), dtype=np.float64)
            if raw.mode == "L":
                arr = arr / 255.0
            elif arr.max() > 1.0:
                arr = arr / arr.max()
        else:
            arr = np.asarray(raw.convert("L"), dtype=np.float64) / 255.0
    return ComplexImage(real=arr, imag=np.zeros_like(arr))
