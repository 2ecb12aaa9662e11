"""Unitary 2-D discrete Fourier transform over 2-channel (real, imag) data.

Data is channels-last: (h, w, 2) or (n, h, w, 2).  Normalization is
1/sqrt(N) in both directions, so dft2 and idft2 are exact inverses and
preserve energy (Parseval).  As a real-linear map on the stacked channels
the transform is orthogonal, which makes the backward rule simply the
opposite transform.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor


def dft2_array(data):
    """Unitary forward DFT on a raw (..., h, w, 2) array."""
    z = np.fft.fft2(data[..., 0] + 1j * data[..., 1], norm="ortho", axes=(-2, -1))
    return np.ascontiguousarray(
        np.stack([z.real, z.imag], axis=-1).astype(data.dtype))


def idft2_array(data):
    """Unitary inverse DFT on a raw (..., h, w, 2) array."""
    z = np.fft.ifft2(data[..., 0] + 1j * data[..., 1], norm="ortho", axes=(-2, -1))
    return np.ascontiguousarray(
        np.stack([z.real, z.imag], axis=-1).astype(data.dtype))


def _check_channels(x, name):
    if x.data.ndim not in (3, 4) or x.shape[-1] != 2:
        raise ShapeError(f"{name} expects (..., h, w, 2), got {x.shape}")


def dft2(x):
    """Differentiable unitary DFT of a 2-channel tensor."""
    _check_channels(x, "dft2")
    data = dft2_array(x.data)

    def bwd(grad):
        return (idft2_array(grad),)

    return Tensor.from_op(data, (x,), bwd, "dft2")


def idft2(x):
    """Differentiable unitary inverse DFT of a 2-channel tensor."""
    _check_channels(x, "idft2")
    data = idft2_array(x.data)

    def bwd(grad):
        return (dft2_array(grad),)

    return Tensor.from_op(data, (x,), bwd, "idft2")
