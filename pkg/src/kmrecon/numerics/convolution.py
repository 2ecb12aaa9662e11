"""2-D convolution primitives with reverse-mode rules.

Activations are channels-last (n, h, w, c); kernels keep the
(c_out, c_in, kh, kw) parameter layout.  Both directions run as a sum of
per-offset GEMMs over the padded input ("shift-GEMM"), which keeps the
work inside BLAS without materializing an im2col buffer.  The forward pass
is cross-correlation in the usual deep-learning sense; input gradients are
a stride-dilated correlation with the spatially flipped kernel.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor


def _im2col(x, kh, kw, stride, pad):
    """(n, h, w, c) -> column matrix (n*oh*ow, kh*kw*c) plus (oh, ow)."""
    if pad > 0:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    n, h, w, c = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, oh, ow, kh, kw, c),
        strides=(s0, s1 * stride, s2 * stride, s1, s2, s3),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(n * oh * ow, kh * kw * c), oh, ow


def _weight_matrix(w):
    """(c_out, c_in, kh, kw) -> (kh*kw*c_in, c_out) matching im2col order."""
    c_out = w.shape[0]
    return np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(-1, c_out))


def _conv_forward_data(x, w, stride, pad):
    """Returns (output (n, oh, ow, c_out), column matrix)."""
    n = x.shape[0]
    c_out, _, kh, kw = w.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    out = cols @ _weight_matrix(w)
    return out.reshape(n, oh, ow, c_out), cols


def _conv_weight_grad(grad_mat, cols, w_shape):
    c_out, c_in, kh, kw = w_shape
    gw = (cols.T @ grad_mat).reshape(kh, kw, c_in, c_out)
    return np.ascontiguousarray(gw.transpose(3, 2, 0, 1))


def _conv_input_grad(grad, w, x_shape, stride, pad):
    """Gradient w.r.t. the conv input, as a stride-1 correlation with the
    flipped kernel over the zero-dilated output gradient."""
    n, h, w_in, c_in = x_shape
    c_out, _, kh, kw = w.shape
    _, oh, ow, _ = grad.shape
    if stride > 1:
        dil = np.zeros((n, (oh - 1) * stride + 1, (ow - 1) * stride + 1, c_out),
                       dtype=grad.dtype)
        dil[:, ::stride, ::stride, :] = grad
    else:
        dil = grad
    # Residual rows/cols of the padded input never touched by the forward
    # sliding window get zero gradient; pad the dilated grad accordingly.
    rh = (h + 2 * pad - kh) % stride
    rw = (w_in + 2 * pad - kw) % stride
    ph, pw = kh - 1 - pad, kw - 1 - pad
    if ph < 0 or pw < 0:
        raise ShapeError(f"conv2d: padding {pad} exceeds kernel-1 for kernel {kh}x{kw}")
    dil = np.pad(dil, ((0, 0), (ph, ph + rh), (pw, pw + rw), (0, 0)))
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gx, _ = _conv_forward_data(dil, w_flip, 1, 0)
    if gx.shape[1:3] != (h, w_in):
        raise ShapeError(
            f"conv2d backward: reconstructed input grad {gx.shape[1:3]} != {(h, w_in)}")
    return np.ascontiguousarray(gx)


def conv2d(x, w, b=None, stride=1, pad=None):
    """2-D convolution of (n, h, w, c_in) with kernels (c_out, c_in, kh, kw).

    ``stride`` 1 is the plain convolution; ``stride`` > 1 is the subsampling
    variant used on the encoder path.  ``pad`` defaults to kh // 2 (shape
    preserving at stride 1 for odd kernels).
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape}, {w.shape}")
    if x.shape[3] != w.shape[1]:
        raise ShapeError(
            f"conv2d: input channels {x.shape[3]} != weight in-channels {w.shape[1]}"
            f" (input {x.shape}, weight {w.shape})")
    kh = w.shape[2]
    if pad is None:
        pad = kh // 2
    data, cols = _conv_forward_data(x.data, w.data, stride, pad)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv2d: bias {b.shape} != ({w.shape[0]},)")
        data = data + b.data
    c_out = w.shape[0]

    def bwd(grad):
        grad_mat = grad.reshape(-1, c_out)
        gw = _conv_weight_grad(grad_mat, cols, w.shape) if w.requires_grad else None
        gx = _conv_input_grad(grad, w.data, x.shape, stride, pad) \
            if x.requires_grad else None
        gb = grad.sum(axis=(0, 1, 2)) if (b is not None and b.requires_grad) else None
        if b is None:
            return gx, gw
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return Tensor.from_op(data, parents, bwd, "conv2d")


def upsample_nearest(x, factor=2):
    """Nearest-neighbor spatial upsampling by an integer factor."""
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_nearest expects (n, h, w, c), got {x.shape}")
    n, h, w, c = x.shape
    data = np.ascontiguousarray(
        x.data.repeat(factor, axis=1).repeat(factor, axis=2))

    def bwd(grad):
        g = grad.reshape(n, h, factor, w, factor, c).sum(axis=(2, 4))
        return (g,)

    return Tensor.from_op(data, (x,), bwd, "upsample_nearest")


def upsample_conv(x, w, b=None, factor=2, pad=None):
    """Decoder-path primitive: nearest upsample then stride-1 convolution."""
    return conv2d(upsample_nearest(x, factor), w, b, stride=1, pad=pad)
